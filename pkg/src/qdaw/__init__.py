"""Design-automation workbench for QAOA-family algorithms.

Subpackages and modules:

- ``problems``: instance generation, QUBO encodings, bounds, warm starts
- ``simulator``: native-gate circuits, statevector and noisy density-matrix simulation
- ``algorithms``: QAOA, warm-started variants and recursive QAOA
- ``models``: quality and runtime prediction models
- ``selection``: requirement scopes and algorithm selection
- ``store``: result storage, benchmark sweeps and training
"""

__version__ = "0.1.0"
