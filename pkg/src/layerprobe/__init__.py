"""Layer-wise structural probing toolkit.

Trains per-layer distance probes over scalar-mixed embeddings, decodes
dependency trees with a minimum spanning tree, scores subgraph recovery
with undirected attachment scores, and locates the layer at which each
subgraph emerges.
"""

__version__ = "0.1.0"
