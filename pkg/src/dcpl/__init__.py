"""Source-free adaptation with a learned noise transition over pseudo-labels."""
from .dataset import Dataset, load_dataset, load_head, save_dataset, save_head
from .errors import DCPLError
from .losses import HyperParams, LossBreakdown, dcpl_batch_loss, im_loss, total_loss
from .model import ModelParams, forward_probs, predict_labels, sgd_step
from .pseudolabel import PriorMatrix, assign_pseudo_labels, compute_centroids, compute_prior_matrix
from .synthbench import SynthConfig, generate_pair, oracle_transition, train_source_head
from .trainer import AdaptationReport, run_adaptation, run_identity_baseline, run_oracle
from .transition import TransitionParams, init_near_identity, materialize

__version__ = "0.1.0"
