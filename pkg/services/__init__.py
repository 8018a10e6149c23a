"""Services module for molcap"""

from .checkpoint_store import load_checkpoint, save_checkpoint
from .dataset_service import generate_dataset, load_manifest
from .decode_bench import bench_decode
from .evaluation_service import ModelCaptioner, evaluate
from .inference_service import DecodeCache, greedy_decode
from .model_weights import CaptionModel, ModelWeights, build_model
from .tokenizer import Vocab, build_vocab
from .training_service import TrainingService

__all__ = [
    "CaptionModel",
    "DecodeCache",
    "ModelCaptioner",
    "ModelWeights",
    "TrainingService",
    "Vocab",
    "bench_decode",
    "build_model",
    "build_vocab",
    "evaluate",
    "generate_dataset",
    "greedy_decode",
    "load_checkpoint",
    "load_manifest",
    "save_checkpoint",
]
