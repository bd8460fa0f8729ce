"""simclass: classification toolkit for mesh-discretized simulation data.

Pipeline stages: synthetic field generation (synth), physics-informed
labeling (labeling), mutual-information machinery (mutual_info), distance-
metamodel feature selection (feature_selection), convex-geometry kernel
(convex), pure-set data augmentation (augment), classifier evaluation
(classify), and the CLI chain (cli).
"""

from ._kernels import NUMBA_ENABLED

__version__ = "0.1.0"

__all__ = ["NUMBA_ENABLED", "__version__"]
