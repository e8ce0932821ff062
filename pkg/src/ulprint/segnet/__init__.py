"""Segmentation core: dilated convolutions, loss, toy segmenter, mask prediction."""
from .layers import ConvSpec, DILATION_SCHEDULE, conv2d_dilated, conv2d_dilated_backward, dilated_decoder_block
from .losses import LossParams, closs, closs_grad, dice_loss, focal_loss, iou
from .model import (CheckpointError, ToyNet, ToyNetConfig, TrainResult, TrainingDiverged, load_checkpoint,
                    save_checkpoint, toy_train)
from .predict import (FallbackReport, FileMaskPredictor, GaborPredictor, ModelPredictor, predict_mask,
                      predict_with_fallback)
