from .network import ForwardResult, ModelConfig, ViewportTransformer, ablation_variant  # noqa: F401
from .losses import loss_cls, loss_pos, total_loss  # noqa: F401
from .extractor import MobileNetExtractor, StubExtractor, get_extractor  # noqa: F401
from .checkpoint import CheckpointMismatchError, load_checkpoint, save_checkpoint  # noqa: F401
