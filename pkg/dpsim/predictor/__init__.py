from dpsim.predictor.types import (
    DEFAULT_HIDDEN,
    Activation,
    MlpWeights,
    PredictorReport,
    TargetSource,
    TrainConfig,
    TrainResult,
)
from dpsim.predictor.mlp import forward, init_layers, init_mlp, loss_and_gradients
from dpsim.predictor.predict import (
    PsfPredictor,
    encode_point,
    encode_points,
    evaluate_predictor,
    predict,
)
from dpsim.predictor.train import (
    Adam,
    GridTargets,
    TraceTargets,
    cosine_lr,
    max_normalized_target,
    train,
)
from dpsim.predictor.weights import load_weights, save_weights
