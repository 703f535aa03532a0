from ctda.trainer.checkpoint import load_checkpoint, save_checkpoint
from ctda.trainer.data import LabeledSet, featurize, intensity_histogram, load_splits, patch_features, split_cases
from ctda.trainer.loop import Strategy, TrainConfig, Trainer, TrainResult, splits_for, train
from ctda.trainer.metrics import Evaluation, ExperimentLog, evaluate, read_log, write_log
from ctda.trainer.model import FeatureMap, LinearHead, forward
from ctda.trainer.sampling import BalancedBatchSampler, balanced_batches
from ctda.trainer.schedule import TemperatureSchedule, cosine_lr
