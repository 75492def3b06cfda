from .features import ComplexityFeatures, SENTINEL, extract_features, distance_to_intersection
from .grading import (LearnedGrader, subscores, rule_score, rule_complexity, grade_from_score, grade_from_logits,
                      learned_complexity, normalize_features, ordinal_targets, ordinal_loss, split_70_30, fit_grader,
                      grade_accuracy)
from .scheduler import GateState, CAIGate, should_infer, average_interval, run_schedule
