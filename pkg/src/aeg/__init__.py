"""Black-box adversarial text generation with a reinforced encoder-decoder.

Subpackages by role: `autodiff`/`nn` (differentiable core), `data`
(vocabulary and corpora), `targets` (victim classifiers + oracle),
`encoder`/`decoder`/`model` (the generator), `rewards`, `training`
(teacher forcing + self-critical fine-tuning), `attack`/`report` (the
evaluation harness) and `cli`.
"""

__version__ = "0.1.0"

from .config import AegConfig, AttackConfig, PretrainConfig, RlConfig
from .model import AegModel

__all__ = ["AegConfig", "AttackConfig", "PretrainConfig", "RlConfig",
           "AegModel", "__version__"]
