"""JSON Schemas for every document the package reads or writes."""

_number_vec = {"type": "array", "items": {"type": "number"}}
_matrix = {"type": "array", "items": _number_vec}

FLOWS = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "flows",
    "type": "object",
    "required": ["k", "marginals", "plans"],
    "properties": {
        "k": {"type": "integer", "minimum": 2},
        "marginals": {"type": "array", "items": _number_vec},
        "plans": {"type": "array", "items": _matrix},
        "config": {"type": "object"},
    },
}

SYNTHETIC_SPEC = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "synthetic_spec",
    "type": "object",
    "required": ["k", "N", "T", "kernel"],
    "properties": {
        "k": {"type": "integer", "minimum": 2},
        "N": {"type": "integer", "minimum": 1},
        "T": {"type": "integer", "minimum": 2},
        "kernel": _matrix,
        "seed": {"type": "integer"},
        "drift": {"type": ["array", "null"], "items": _matrix},
        "initial": {"type": ["array", "null"], "items": {"type": "number"}},
    },
}

CHECKPOINT = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "checkpoint",
    "type": "object",
    "required": ["k", "hidden_sizes", "seed", "weights", "weight_shapes", "biases", "loss_cfg"],
    "properties": {
        "k": {"type": "integer", "minimum": 2},
        "hidden_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "seed": {"type": "integer"},
        "weights": {"type": "array", "items": _number_vec},
        "weight_shapes": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "biases": {"type": "array", "items": _number_vec},
        "loss_cfg": {"type": ["object", "null"]},
        "sinkhorn_cfg": {"type": ["object", "null"]},
        "config": {"type": "object"},
    },
}

LOSS_TRACE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "loss_trace",
    "type": "object",
    "required": ["loss_trace"],
    "properties": {"loss_trace": _number_vec, "config": {"type": "object"}},
}

_method_result = {
    "type": "object",
    "required": ["flow_cost_mean", "flow_cost_sum", "faction_rmse", "per_step", "multi_step"],
    "properties": {
        "flow_cost_mean": {"type": "number", "minimum": 0},
        "flow_cost_sum": {"type": "number", "minimum": 0},
        "faction_rmse": {"type": "number", "minimum": 0},
        "per_step": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "multi_step": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "per_seed": {"type": "array", "items": {"type": "object"}},
    },
}

EVAL_REPORT = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "eval_report",
    "type": "object",
    "required": ["config", "seeds", "split", "test_steps", "anchors", "methods", "errors"],
    "properties": {
        "config": {"type": "object"},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "split": {"type": "object"},
        "test_steps": {"type": "array", "items": {"type": "integer"}},
        "anchors": {"type": "array", "items": {"type": "integer"}},
        "methods": {"type": "object", "additionalProperties": _method_result},
        "errors": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}

GRADCHECK_REPORT = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "gradcheck_report",
    "type": "object",
    "required": ["passed", "reports", "config"],
    "properties": {
        "passed": {"type": "boolean"},
        "config": {"type": "object"},
        "reports": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "trials", "max_fd_error", "max_unrolled_error", "passed"],
            },
        },
    },
}

PLAN_PREDICTION = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "plan_prediction",
    "type": "object",
    "required": ["k", "t", "plans", "marginals"],
    "properties": {
        "k": {"type": "integer"},
        "t": {"type": "integer"},
        "plans": {"type": "array", "items": _matrix},
        "marginals": {"type": "array", "items": _number_vec},
        "config": {"type": "object"},
    },
}

SANKEY = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "sankey",
    "type": "object",
    "required": ["k", "labels", "time_labels", "columns", "steps", "marker"],
    "properties": {
        "k": {"type": "integer", "minimum": 2},
        "labels": {"type": "array", "items": {"type": "string"}},
        "time_labels": {"type": "array", "items": {"type": "string"}},
        "columns": {"type": "array", "items": _number_vec},
        "steps": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["marginals", "flows"],
                "properties": {"marginals": _number_vec, "flows": _matrix},
            },
        },
        "marker": {"type": "integer", "minimum": 0},
        "config": {"type": "object"},
    },
}
