"""Search-space shrinkage toolkit for one-shot NAS at desk scale.

A PU-learned path filter over layered discrete search spaces, greedy
rejection sampling, embedding-similarity operation merging, and a
filter-assisted NSGA-II search, all driven by tabular/synthetic
benchmarks standing in for a weight-sharing supernet.
"""

__version__ = "0.1.0"

from .space import Architecture, SearchSpace, OpDescriptor

__all__ = ["Architecture", "SearchSpace", "OpDescriptor", "__version__"]
