"""Softmax dense classifier with a scikit-learn interface."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .nn import DenseNet, TrainConfig, loss_and_gradients, train_net


class DenseClassifier(ClassifierMixin, BaseEstimator):
    """Multi-class dense network trained with softmax cross-entropy and SGD.

    Parameters
    ----------
    hidden : tuple of int
        Hidden layer widths; ``()`` gives multinomial logistic regression.
    activation : str
        Hidden activation tag.
    learning_rate, batch_size, epochs, seed
        Passed to :class:`~sfegacn.nn.TrainConfig`.
    standardize : bool
        Z-score inputs with statistics of the training data.
    class_weight : None or "balanced"
        ``"balanced"`` weights each sample by ``n / (n_classes * n_class)``
        so every class contributes the same total loss.
    """

    def __init__(self, hidden=(32,), activation="relu", learning_rate=0.1,
                 batch_size=32, epochs=100, seed=0, standardize=True, class_weight=None):
        self.hidden = hidden
        self.activation = activation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.standardize = standardize
        self.class_weight = class_weight

    def _scale(self, X):
        if not self.standardize:
            return X
        return (X - self.mean_) / self.scale_

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on ``(X, y)``.

        When a validation set is given, its loss after every epoch is kept in
        ``val_loss_curve_``.
        """
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=False)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            scale = X.std(axis=0)
            self.scale_ = np.where(scale > 0, scale, 1.0)
        Xs = self._scale(X)
        dims = [X.shape[1], *self.hidden, len(self.classes_)]
        acts = [self.activation] * len(self.hidden) + ["softmax"]
        self.net_ = DenseNet(dims, acts, seed=self.seed)
        Y = np.eye(len(self.classes_))[y_idx]
        if self.class_weight == "balanced":
            counts = np.bincount(y_idx, minlength=len(self.classes_))
            Y = Y * (len(y_idx) / (len(self.classes_) * counts))[y_idx, None]
        elif self.class_weight is not None:
            raise ValueError(f"class_weight must be None or 'balanced', got {self.class_weight!r}")
        cfg = TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.seed)

        callback = None
        self.val_loss_curve_ = []
        if X_val is not None:
            Xv = self._scale(check_array(X_val, dtype=np.float64))
            Yv = self._one_hot(y_val)

            def callback(epoch, net):
                self.val_loss_curve_.append(loss_and_gradients(net, Xv, Yv, "ce")[0])

        self.loss_curve_ = train_net(self.net_, Xs, Y, cfg, loss="ce", callback=callback)
        return self

    def _one_hot(self, y):
        y = np.asarray(y)
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        Y = np.zeros((len(y), len(self.classes_)))
        known = self.classes_[idx] == y
        Y[np.flatnonzero(known), idx[known]] = 1.0
        return Y

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return self.net_.forward(self._scale(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def log_loss(self, X, y):
        """Mean cross-entropy of the fitted net on ``(X, y)``."""
        check_is_fitted(self, "net_")
        X = self._scale(check_array(X, dtype=np.float64))
        return loss_and_gradients(self.net_, X, self._one_hot(y), "ce")[0]
