# 卷积网络：SegNet 图块分类、反馈式弱监督分割、级联
from .base import PatchModel, bce_loss
from .segnet import SegNetModel, segnet_forward
from .feedback import FeedbackModel, FootprintMap, feedback_segment
from .training import TrainConfig, TrainResult, GradCheckResult, accuracy, grad_check, train
from .model_io import build_model, load_models, save_models
from .cascade import cascade, footprint_fraction
