"""Online class-incremental learning with replay and momentum-teacher
distillation, plus the metrics needed to study forgetting behavior."""

from .augmentation import AugPolicy, augment
from .boundary_detector import BoundaryState, initial_state, observe
from .datasets import ArrayDataset, load_dataset, synthetic_dataset
from .datastream import StreamBatch, TaskSchedule, build_schedule, iter_blurry, iter_clear
from .losses import (LossBreakdown, compose, derpp_loss, er_loss, erace_loss,
                     kl_distill, mkd_loss, mkd_loss_single_view, snapshot_kd_loss)
from .metrics import (AccuracyMatrix, DriftSeries, backward_transfer,
                      confusion_matrix, feature_drift, final_avg_accuracy, ncm_eval)
from .model import build_model, flat_params, load_flat_params
from .momentum_teacher import (DistillConfig, MomentumTeacher, TeacherState,
                               average_weights, ema_update, inference_model,
                               lambda_of_alpha)
from .replay_buffer import MemoryBatch, ReplayBuffer, StaleHandleError

__version__ = "0.1.0"
