"""scikit-learn style wrapper around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_label_sets
from .data import Dataset, Standardizer
from .hamming import BinaryCodeSet, binarize
from .trainer import TrainConfig, encode_dataset, train


class QSMIHashing(TransformerMixin, BaseEstimator):
    """Supervised hashing network trained with the clamped spherical MI loss.

    ``fit`` takes labels as a 1-D int array or a list of label sets; ``transform``
    returns real-valued codes and ``binary_codes`` their packed sign bits.
    """

    def __init__(
        self,
        n_bits=12,
        hidden_layer_sizes=(32,),
        learning_rate=0.001,
        batch_size=128,
        epochs=50,
        alpha=0.01,
        beta=0.0,
        sigma2=100.0,
        measure="cosine",
        clamped=True,
        n_unsup_clusters=5,
        hash_reduction="mean",
        standardize=True,
        random_state=0,
    ):
        self.n_bits = n_bits
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.alpha = alpha
        self.beta = beta
        self.sigma2 = sigma2
        self.measure = measure
        self.clamped = clamped
        self.n_unsup_clusters = n_unsup_clusters
        self.hash_reduction = hash_reduction
        self.standardize = standardize
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return TrainConfig(
            code_length=self.n_bits,
            hidden=tuple(self.hidden_layer_sizes),
            lr=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            alpha=self.alpha,
            beta=self.beta,
            sigma2=self.sigma2,
            measure=self.measure,
            clamped=self.clamped,
            unsup_clusters=self.n_unsup_clusters,
            seed=seed,
            hash_reduction=self.hash_reduction,
        )

    def fit(self, X, y):
        X = check_features(X, min_samples=2)
        labels = check_label_sets(y, X.shape[0])
        cfg = self._config()
        self.standardizer_ = Standardizer.fit(X) if self.standardize else None
        Xs = self.standardizer_.transform(X) if self.standardize else X
        self.encoder_, self.log_ = train(Dataset(Xs, labels), cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def _prepare(self, X):
        check_is_fitted(self, "encoder_")
        X = check_features(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.standardizer_.transform(X) if self.standardizer_ is not None else X

    def transform(self, X):
        X = self._prepare(X)
        return encode_dataset(self.encoder_, X)

    def binary_codes(self, X, ids=None, labels=None) -> BinaryCodeSet:
        Y = self.transform(X)
        if labels is not None:
            labels = check_label_sets(labels, Y.shape[0])
        return binarize(Y, None if ids is None else np.asarray(ids), labels)
