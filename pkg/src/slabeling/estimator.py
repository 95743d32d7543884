"""scikit-learn style wrapper around the sieve."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import PRACTICAL_TUPLE_CAP, run
from .params import ParamSchedule, practical_schedule


class Slabeling(BaseEstimator, ClusterMixin):
    """Dimension-wise clustering of a point cloud drawn from a mixture of
    manifolds.

    Parameters
    ----------
    d_max : largest dimension scanned (default D - 1).
    schedule : a :class:`ParamSchedule`, or per-field overrides of the
        practical schedule (e.g. ``{"h_par": {1: 0.1}, "n_min": 5}``).
    threads : worker threads; results do not depend on it.
    max_tuples_per_anchor : enumeration cap, None for exhaustive.

    Attributes
    ----------
    result_ : the full :class:`StratificationResult`.
    labels_ : layer index of every point (0 .. n_layers_ - 1), -1 for residual points.
    dims_ : detected dimension of every point, d_max + 1 for residual points.
    layer_dims_ : dimension of each layer, ascending.
    n_layers_ : number of detected layers.
    """

    def __init__(self, d_max=None, schedule=None, threads=1, max_tuples_per_anchor=PRACTICAL_TUPLE_CAP):
        self.d_max = d_max
        self.schedule = schedule
        self.threads = threads
        self.max_tuples_per_anchor = max_tuples_per_anchor

    def _schedule_for(self, n: int, D: int) -> ParamSchedule:
        if isinstance(self.schedule, ParamSchedule):
            return self.schedule
        return practical_schedule(n, D, overrides=self.schedule, d_max=self.d_max)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=3)
        if X.shape[1] < 2:
            raise ValueError("need ambient dimension at least 2")
        sched = self._schedule_for(*X.shape)
        self.result_ = run(X, sched, threads=self.threads, max_tuples_per_anchor=self.max_tuples_per_anchor)
        labels = np.full(len(X), -1, dtype=np.int64)
        for i, layer in enumerate(self.result_.layers):
            labels[layer.labeled_indices] = i
        self.labels_ = labels
        self.dims_ = self.result_.point_dims()
        self.layer_dims_ = np.asarray(self.result_.dims, dtype=np.int64)
        self.n_layers_ = self.result_.K_hat
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def complexes(self, X):
        """Hull complexes of the detected layers; ``X`` is the fitted sample."""
        from .metrics import reconstruct_layer

        check_is_fitted(self, "result_")
        X = check_array(X, dtype=np.float64)
        if len(X) != self.result_.n_points:
            raise ValueError("X is not the sample the estimator was fitted on")
        return [reconstruct_layer(layer, X) for layer in self.result_.layers if len(layer.tuples)]
