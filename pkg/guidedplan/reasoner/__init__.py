from .tokenizer import Tokenizer, token_ids, word_id, reserved_id, tokenize_text
from .prompt import SEGMENTS, SYSTEM_MESSAGE, PromptSequence, assemble_prompt
from .aux import (AuxHeads, AuxLabels, AuxPredictions, VELOCITY_DECISIONS, aux_heads, aux_loss, aux_terms,
                  derive_aux_labels)
from .model import (Reasoner, HiddenStates, GuidanceVector, TransformerBlock, reasoner_forward, extract_guidance,
                    as_guidance_tensor)
