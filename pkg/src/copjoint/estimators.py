"""scikit-learn style estimators wrapping the joint models."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, jenks_breaks, jenks_classify
from .estimation import TrainConfig, train
from .evaluation import mpe_from_cells, joint_argmax, report
from .exceptions import DomainError
from .model import LOGIT, ORDINAL, RESLOGIT, BlockSpec, ModelSpec


class _JointChoiceModel(BaseEstimator):
    _backbone = LOGIT

    def _depth(self):
        return 0

    def _encode_targets(self, y):
        y = check_array(y, dtype=None, ensure_2d=True)
        if y.shape[1] != 2:
            raise DomainError(f"y must have two columns (first, second outcome), got {y.shape[1]}")
        classes, codes = [], []
        for j in range(2):
            labels, idx = np.unique(y[:, j], return_inverse=True)
            if len(labels) < 2:
                raise DomainError(f"outcome column {j} has a single category")
            classes.append(labels)
            codes.append(idx)
        return classes, codes

    def _features(self, given, d):
        if given is None:
            return tuple(range(d))
        feats = tuple(int(i) for i in given)
        if any(i < 0 or i >= d for i in feats):
            raise DomainError(f"feature indices must lie in 0..{d - 1}")
        return feats

    def fit(self, X, y):
        """Fit on features ``X`` (n, d) and outcome pairs ``y`` (n, 2).

        Category order is the sorted order of each column's labels.
        """
        X = check_array(X, dtype=np.float64)
        classes, (ya, yb) = self._encode_targets(y)
        if len(ya) != X.shape[0]:
            raise DomainError("X and y have different numbers of rows")
        d = X.shape[1]
        self.spec_ = ModelSpec(
            BlockSpec(self.first, len(classes[0]), self._features(self.first_features, d)),
            BlockSpec(ORDINAL, len(classes[1]), self._features(self.second_features, d)),
            self.family,
            self._backbone,
            self._depth(),
        )
        cfg = TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            depth=self._depth(),
            seed=self.seed,
            split_ratio=self.split_ratio,
        )
        data = Dataset(X, ya, yb, [f"x{j}" for j in range(d)], (len(classes[0]), len(classes[1])))
        self.model_ = train(self.spec_, data, cfg)
        self.classes_ = classes
        self.n_features_in_ = d
        self.theta_ = self.model_.thetas
        self.n_params_ = self.model_.n_params
        return self

    def predict_proba(self, X):
        """Joint cell probabilities, shape (n, K_first, K_second)."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(f"X has {X.shape[1]} features, the model was fit with {self.n_features_in_}")
        return self.model_.cells(X)

    def predict(self, X):
        """Most probable joint outcome per row, as original labels (n, 2)."""
        pa, pb, _ = joint_argmax(self.predict_proba(X))
        return np.column_stack([self.classes_[0][pa], self.classes_[1][pb]])

    def _codes(self, y):
        y = check_array(y, dtype=None, ensure_2d=True)
        out = []
        for j in range(2):
            lookup = {lab: i for i, lab in enumerate(self.classes_[j].tolist())}
            try:
                out.append(np.array([lookup[v] for v in y[:, j].tolist()], dtype=np.int64))
            except KeyError as exc:
                raise DomainError(f"unseen label {exc.args[0]!r} in outcome column {j}") from None
        return out

    def score(self, X, y):
        """Share of rows whose joint outcome is predicted exactly (1 - MPE)."""
        ya, yb = self._codes(y)
        return 1.0 - mpe_from_cells(self.predict_proba(X), ya, yb)

    def fit_report(self, X, y):
        """LL, parameter count, AIC, MPE and theta on ``(X, y)``."""
        check_is_fitted(self, "model_")
        ya, yb = self._codes(y)
        X = check_array(X, dtype=np.float64)
        data = Dataset(X, ya, yb, [f"x{j}" for j in range(X.shape[1])],
                       (len(self.classes_[0]), len(self.classes_[1])))
        return report(self.model_, data)


class CopulaLogit(_JointChoiceModel):
    """Copula-coupled ordered logit / MNL pair.

    Parameters
    ----------
    family : str
        Copula family name, or ``"product"`` for independent margins.
    first : {"ordinal", "multinomial"}
        Kind of the first outcome; the second is always ordinal.
    first_features, second_features : sequence of int or None
        Columns of ``X`` entering each block (all columns when None).
    """

    def __init__(self, family="frank", first=ORDINAL, first_features=None, second_features=None,
                 batch_size=64, learning_rate=1e-3, max_epochs=200, patience=10, seed=0, split_ratio=0.7):
        self.family = family
        self.first = first
        self.first_features = first_features
        self.second_features = second_features
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.split_ratio = split_ratio


class CopulaResLogit(_JointChoiceModel):
    """Copula-coupled residual-logit pair (``depth`` residual layers per block)."""

    _backbone = RESLOGIT

    def __init__(self, family="frank", first=ORDINAL, depth=16, first_features=None, second_features=None,
                 batch_size=64, learning_rate=1e-3, max_epochs=200, patience=10, seed=0, split_ratio=0.7):
        self.family = family
        self.first = first
        self.depth = depth
        self.first_features = first_features
        self.second_features = second_features
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.split_ratio = split_ratio

    def _depth(self):
        return int(self.depth)


class JenksBreaks(BaseEstimator, TransformerMixin):
    """Discretise each column into ``n_classes`` Jenks natural-break classes."""

    def __init__(self, n_classes=3):
        self.n_classes = n_classes

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.thresholds_ = [jenks_breaks(X[:, j], self.n_classes) for j in range(X.shape[1])]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "thresholds_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(f"X has {X.shape[1]} columns, fitted on {self.n_features_in_}")
        return np.column_stack([jenks_classify(X[:, j], t) for j, t in enumerate(self.thresholds_)])


__all__ = ["CopulaLogit", "CopulaResLogit", "JenksBreaks"]
