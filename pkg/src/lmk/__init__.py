"""Single-landmark localization with cascades of boosted pixel-comparison trees."""

from .cascade import (CascadeModel, PerturbationPolicy, TrainConfig, estimate, estimate_once,
                      estimate_regions, train_cascade)
from .dataset import AugmentationConfig, ManifestError, ManifestRecord, augment, load_manifest
from .ensemble import BoostedEnsemble, predict, train_ensemble
from .evaluation import AccuracyCurve, EvalRecord, accuracy_curve, benchmark, normalized_error
from .imaging import (GrayImage, InvalidParameterError, NormLocation, PGMError, Region, binary_test,
                      read_pgm, sample_pixel, shrink_recenter, write_pgm)
from .model_io import decode, encode, load, save
from .tree import (BinaryTestParams, RegressionTree, SampleSet, TrainSample, cluster_cost, grow_tree,
                   select_test, traverse)

__version__ = "0.1.0"
