"""EO image quality toolkit: modifiers, FR/NR metrics, interval regressors, SR baselines."""

from .errors import EoqaError
from .evaluation import QualityVector, ScoreConvention, aggregate_score
from .image import Image, load_image, save_image
from .modifiers import DEFAULT_GRIDS, ModifierKind, ParamGrid, apply_modifier

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRIDS", "EoqaError", "Image", "ModifierKind", "ParamGrid",
    "QualityVector", "ScoreConvention", "aggregate_score", "apply_modifier",
    "load_image", "save_image", "__version__",
]
