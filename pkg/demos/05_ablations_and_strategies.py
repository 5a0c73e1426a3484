"""The ablation grid and the three training strategies, at toy scale.

Each cell trains on a shared split and reports accuracy/F1 with full config
provenance; the strategy comparison trains one model per subtype (split),
one per group, and one joint model.
"""

from village_hgnn.dataio import generate_synthetic
from village_hgnn.taxonomy import default_schema
from village_hgnn.trainer import TrainConfig, run_ablation, run_strategy

schema = default_schema()
dataset, _ = generate_synthetic(40, seed=11, noise=0.0, schema=schema)
config = TrainConfig(epochs=2, seed=11, precision="f32")

print("fusion-weight sweep (beta grid):")
rows = run_ablation(dataset, config, schema, ["beta"], threads=1)
for row in rows:
    print(f"  {row['cell']:10s} acc {row['accuracy']:.4f}  f1 {row['macro_f1']:.4f}  "
          f"config {row['config_hash']}")

print("\ncommunication-edge and init ablations:")
for grid in ("edges", "init", "fc"):
    for row in run_ablation(dataset, config, schema, [grid], threads=1):
        print(f"  {row['cell']:18s} acc {row['accuracy']:.4f}  f1 {row['macro_f1']:.4f}")

print("\ntraining strategies on one shared split:")
table = run_strategy(dataset, config, schema)
print(f"  {'strategy':10s} {'S':>7s} {'V':>7s} {'R':>7s} {'avg':>7s}")
for strategy, row in table.items():
    cells = [row[g].get("accuracy", float('nan')) for g in ("S", "V", "R")]
    print(f"  {strategy:10s} " + " ".join(f"{c:7.4f}" for c in cells)
          + f" {row['average']['accuracy']:7.4f}")
