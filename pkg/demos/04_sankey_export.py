# Sankey document for three observed steps followed by a two-step forecast.
#
# Run:  python3 demos/04_sankey_export.py
# Writes flows.sankey.json and flows.svg into the current directory.

import json

import numpy as np

from sinkflow.dataio import FlowData, SyntheticSpec, generate_synthetic, write_json, atomic_write_text
from sinkflow.model import LossConfig, ModelInput, init_params, make_samples, rollout, train
from sinkflow.ot_layer import SinkhornConfig
from sinkflow.sankey import sankey_document, to_svg

K = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]
data = FlowData.from_timeline(generate_synthetic(SyntheticSpec(k=3, N=2000, T=40, kernel=K, seed=4)))

samples = make_samples(data.marginals, data.plans, range(30))
result = train(samples, init_params(3, seed=0), LossConfig(learning_rate=0.1, epochs=200))
print("training loss %.5f -> %.5f" % (result.loss_trace[0], result.loss_trace[-1]))

# columns 30, 31, 32 are observed; two forecast columns follow
start, t = 30, 32
tight = SinkhornConfig(max_iters=10_000, tol=1e-12)
pred = rollout(ModelInput.from_history(data.marginals, data.plans, t), result.params, 2, tight)

marginals = list(data.marginals[start:t + 1]) + [P.sum(axis=0) for P in pred]
plans = list(data.plans[start:t]) + pred
doc = sankey_document(marginals, plans, marker=3, labels=["left", "centre", "right"])

write_json("flows.sankey.json", doc)
atomic_write_text("flows.svg", to_svg(doc))
print("columns", len(doc["columns"]), "flow blocks", len(doc["steps"]), "forecast starts after column", doc["marker"])
for i, step in enumerate(doc["steps"]):
    err = np.abs(np.sum(step["flows"], axis=1) - step["marginals"]).max()
    print("block %d row-sum error %.1e" % (i, err))
print(json.dumps(doc["steps"][-1]["flows"], indent=None)[:120], "...")
