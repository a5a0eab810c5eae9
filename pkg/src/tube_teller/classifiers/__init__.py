from tube_teller.classifiers.augment import AugmentPolicy, augment
from tube_teller.classifiers.base import (
    DECISION_THRESHOLD,
    Label,
    PatchClassifier,
    Prediction,
    Sample,
)
from tube_teller.classifiers.registry import get_classifier, load_classifier
