"""Integer-only neural networks: surrogate-gradient training of binary and
step-counting activations, plus a bit-exact event-driven counter-neuron
execution engine with operation accounting."""

from .model import (Activation, InvariantError, LayerSpec, ModelFormatError,
                    NetworkSpec, OpLedger, QuantizedParams, conv_layer,
                    dense_layer, load_model, save_model, set_debug, stream_rng)
from .frame import (ActivationRecord, binary_step, drelu, drelu_real,
                    error_rate, forward, forward_batch, predict, predict_batch)
from .mnist import (Dataset, EventStream, InputEvent, LabeledImage, binarize,
                    integer_encode, load_idx, load_mnist, stream_pixels)
from .runtime import (BASIC, EXTENDED, CounterState, EventNetwork,
                      ExtendedCounterState, RuntimeOutput, ScalarEventNetwork,
                      basic_update, extended_update, readout, run_stream)
from .training import (TrainConfig, TrainerCheckpoint, fit, init_checkpoint,
                       load_checkpoint, loss_and_grads, save_checkpoint,
                       softmax_cross_entropy, surrogate_drelu,
                       surrogate_drelu_grad, surrogate_sigmoid,
                       surrogate_sigmoid_grad, train_step)
from .bench import (BenchResult, ClassificationCurve, EfficiencySummary,
                    InputRecord, OpsCurve, curve_for_model,
                    efficiency_summary, quartile_summary, seeded_subset,
                    write_curves_csv, write_summary_json)
from .equivalence import DiffCase, SizeLimits, check_case, gen_random_case, run_suite

__version__ = "0.1.0"

__all__ = [
    "Activation", "ActivationRecord", "BASIC", "BenchResult",
    "ClassificationCurve", "CounterState", "Dataset", "DiffCase",
    "EXTENDED", "EfficiencySummary", "EventNetwork", "EventStream",
    "ExtendedCounterState", "InputEvent", "InputRecord", "InvariantError",
    "LabeledImage", "LayerSpec", "ModelFormatError", "NetworkSpec",
    "OpLedger", "OpsCurve", "QuantizedParams", "RuntimeOutput",
    "ScalarEventNetwork", "SizeLimits", "TrainConfig", "TrainerCheckpoint",
    "basic_update", "binarize", "binary_step", "check_case", "conv_layer",
    "curve_for_model", "dense_layer", "drelu", "drelu_real",
    "efficiency_summary", "error_rate", "extended_update", "fit", "forward",
    "forward_batch", "gen_random_case", "init_checkpoint", "integer_encode",
    "load_checkpoint", "load_idx", "load_mnist", "load_model",
    "loss_and_grads", "predict", "predict_batch", "quartile_summary",
    "readout", "run_stream", "run_suite", "save_checkpoint", "save_model",
    "seeded_subset", "set_debug", "softmax_cross_entropy", "stream_pixels",
    "stream_rng", "surrogate_drelu", "surrogate_drelu_grad",
    "surrogate_sigmoid", "surrogate_sigmoid_grad", "train_step",
    "write_curves_csv", "write_summary_json",
]
