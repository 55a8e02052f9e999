"""Continuous-depth models across dimensional bottlenecks.

Library layout:

* omega      -- the bottleneck state space and its constants
* geometry   -- grid-level verification of the retraction calculus
* kernels    -- numba/numpy twin implementations of the hot loops
* mlp        -- networks with hand-derived VJPs and JSON checkpoints
* fields     -- compressing, autoencoder, and classifier vector fields
* flow       -- fixed-step integration and discrete adjoints
* datasets   -- spiral/sphere sampling, embeddings, labels
* training   -- losses, optimizers, schedulers, training loops
* metrics    -- alignment, reconstruction, accuracy metrics
* cli        -- the `polyflow` command line entry point
"""

__version__ = "0.1.0"
