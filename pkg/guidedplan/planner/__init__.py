from .decoder import GatedDecoderLayer, decode_with_injection
from .model import (Planner, PlanOutput, GMMPrediction, MultiModalPrediction, HEADS, plan, plan_from_prediction,
                    cumulative, headings_from_positions)
from .losses import select_best_mode, nll_loss, trajectory_l1, gmm_plan_loss, multimodal_plan_loss, total_loss
from .training import TrainingSample, Trainer, make_sample, make_samples
