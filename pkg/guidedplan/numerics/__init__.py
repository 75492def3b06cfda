from .tensor import Tensor, Tape, backward, as_tensor, set_default_dtype, get_default_dtype
from . import ops
from .modules import Module, Linear, LayerNorm, MLP, Embedding, MultiHeadAttention, causal_mask, sinusoidal_positions
from .optim import AdamW, WarmupCosine, adamw_step
from .checkpoint import save_checkpoint, load_checkpoint, state_hash
from .gradcheck import check_gradients
