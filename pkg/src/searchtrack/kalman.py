"""Kalman prediction/update on Gaussian mixtures (EKF linearization for turns)."""

from __future__ import annotations

import numpy as np

from .models import MotionModel, position_matrix, process_cov, transition, transition_jacobian
from .rfs import GaussianMixture

LOG_2PI = np.log(2.0 * np.pi)


def predict_gm(gm: GaussianMixture, motion: MotionModel) -> GaussianMixture:
    """Propagate each component through the motion model (mean via the exact map)."""
    Q = process_cov(motion)
    means = np.empty_like(gm.means)
    covs = np.empty_like(gm.covs)
    for i in range(len(gm)):
        F = transition_jacobian(motion, gm.means[i])
        means[i] = transition(gm.means[i], motion)
        covs[i] = F @ gm.covs[i] @ F.T + Q
    return GaussianMixture(gm.weights.copy(), means, covs, _validated=True)


def gaussian_loglik(z, mean, cov):
    d = np.asarray(z, float) - np.asarray(mean, float)
    L = np.linalg.cholesky(cov)
    sol = np.linalg.solve(L, d)
    return -0.5 * (sol @ sol) - np.log(np.diag(L)).sum() - 0.5 * len(d) * LOG_2PI


def update_gm(gm: GaussianMixture, z, R):
    """Kalman update of every component with a position measurement.

    Returns (log marginal likelihood <g(z|.), gm>, posterior mixture).
    """
    H = position_matrix(gm.dim)
    logq = np.empty(len(gm))
    means = np.empty_like(gm.means)
    covs = np.empty_like(gm.covs)
    for i in range(len(gm)):
        m, P = gm.means[i], gm.covs[i]
        S = H @ P @ H.T + R
        S = 0.5 * (S + S.T)
        K = np.linalg.solve(S, H @ P).T
        innov = np.asarray(z, float) - H @ m
        logq[i] = gaussian_loglik(z, H @ m, S)
        means[i] = m + K @ innov
        covs[i] = P - K @ S @ K.T
        covs[i] = 0.5 * (covs[i] + covs[i].T)
    logw = np.log(gm.weights) + logq
    mx = logw.max()
    w = np.exp(logw - mx)
    total = w.sum()
    post = GaussianMixture(w / total, means, covs, _validated=True)
    return mx + np.log(total), post


def fuse_covariance(P, H, Rs):
    """Posterior covariance after independent position measurements with covariances Rs."""
    info = np.linalg.inv(P)
    for R in Rs:
        info = info + H.T @ np.linalg.solve(R, H)
    out = np.linalg.inv(info)
    return 0.5 * (out + out.T)
