"""What the default registry looks like.

Prints the source roster, the 17 subtypes with their class counts, the
per-subtype relation sets, and the normalized bipartite adjacency structure.
"""

import numpy as np

from village_hgnn.model import normalize_adjacency
from village_hgnn.taxonomy import build_input_adjacency, default_schema

schema = default_schema()
graph = schema.graph

print(f"{graph.n_inputs} input sources across {graph.n_comm} categories:")
for cat in graph.comm_categories:
    members = [s for s in graph.sources if s.category == cat]
    kinds = ", ".join(f"{s.id}({s.kind[0]}{s.input_dim})" for s in members)
    print(f"  {cat:10s} [{len(members):2d}] {kinds}")

print(f"\n{len(schema.subtypes)} subtypes, "
      f"{sum(st.num_classes for st in schema.subtypes)} classes total:")
for st in schema.subtypes:
    pool = ", ".join(schema.relation_map[st.key])
    print(f"  {st.key:3s} ({st.group}, {st.num_classes} classes) pools over: {pool}")

a_in = build_input_adjacency(graph)
print(f"\ninput adjacency: {a_in.shape}, one connection per source "
      f"(row sums: {sorted(set(a_in.sum(axis=1).tolist()))})")
print(f"sources per communication node: {a_in.sum(axis=0).astype(int)}")

a = normalize_adjacency(a_in)
print(f"\nnormalized square adjacency: {a.shape}, symmetric: {np.array_equal(a, a.T)}")
print(f"self-weight of every input node (degree 2): {a[0, 0]:.3f}")
comm_deg = a_in.sum(axis=0) + 1
print("communication-node self-weights:",
      [f"{1/d:.3f}" for d in comm_deg])
