"""Independent reference computations used as test oracles.

Nothing here imports the package's algorithms: each oracle re-derives its
quantity from the defining formula with plain numpy and loops.
"""

import math

import numpy as np


def gaussian_kernel(x1, x2, variance):
    d = np.asarray(x1, float) - np.asarray(x2, float)
    return math.exp(-float(d @ d) / (2.0 * variance))


def rf_features(V, x):
    """``[sin(Vx), cos(Vx)] / sqrt(D)`` computed element by element."""
    D = V.shape[0]
    s = [math.sin(float(V[k] @ x)) for k in range(D)]
    c = [math.cos(float(V[k] @ x)) for k in range(D)]
    return np.array(s + c) / math.sqrt(D)


def local_objective_dense(theta_t, dual, z, y, nbr_thetas, rho, eta, reg):
    """Dense normal equations of the local step: returns (M, b)."""
    n = theta_t.shape[0]
    deg = len(nbr_thetas)
    mids = sum(((theta_t + th) / 2.0 for th in nbr_thetas), np.zeros(n))
    M = 2.0 * np.outer(z, z) + (2.0 * reg + eta + rho * deg) * np.eye(n)
    b = 2.0 * y * z + eta * theta_t + rho * mids - dual
    return M, b


def local_objective_value(th, theta_t, dual, z, y, nbr_thetas, rho, eta, reg):
    val = (y - th @ z) ** 2 + reg * th @ th + dual @ th + 0.5 * eta * np.sum((th - theta_t) ** 2)
    for ti in nbr_thetas:
        val += 0.5 * rho * np.sum((th - (theta_t + ti) / 2.0) ** 2)
    return val


def gradient_descent_solution(theta_t, dual, z, y, nbr_thetas, rho, eta, reg, steps=10_000):
    """Fixed-step gradient descent on the local objective."""
    M, b = local_objective_dense(theta_t, dual, z, y, nbr_thetas, rho, eta, reg)
    L = np.linalg.eigvalsh(M).max()
    th = np.zeros_like(theta_t)
    for _ in range(steps):
        th = th - (M @ th - b) / L
    return th


def has_cycle(n, edges):
    """DFS cycle detection on an undirected graph with vertices 1..n."""
    adj = {v: [] for v in range(1, n + 1)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = set()
    for root in adj:
        if root in seen:
            continue
        stack = [(root, None)]
        while stack:
            v, parent = stack.pop()
            if v in seen:
                return True
            seen.add(v)
            for w in adj[v]:
                if w != parent:
                    stack.append((w, v))
    return False


def reference_domkl(Vs, streams_X, streams_Y, adjacency, rho, eta, eta_g, reg, T):
    """Literal loop over learners, kernels and neighbors, with dense solves and raw exponential weights.

    ``Vs``: list of (D, d) spectral sample arrays, one per kernel.
    ``adjacency``: list of 0-based neighbor lists.
    Returns predictions (J, T) and the final thetas (J, P, 2D).
    """
    J, P = len(adjacency), len(Vs)
    n = 2 * Vs[0].shape[0]
    theta = [[np.zeros(n) for _ in range(P)] for _ in range(J)]
    dual = [[np.zeros(n) for _ in range(P)] for _ in range(J)]
    cum = [[0.0] * P for _ in range(J)]
    q = [[1.0 / P] * P for _ in range(J)]
    preds = np.zeros((J, T))
    for t in range(T):
        zs = [[rf_features(Vs[p], streams_X[j][t]) for p in range(P)] for j in range(J)]
        new_theta = [[None] * P for _ in range(J)]
        for j in range(J):
            y = streams_Y[j][t]
            preds[j, t] = sum(q[j][p] * float(theta[j][p] @ zs[j][p]) for p in range(P))
            for p in range(P):
                z = zs[j][p]
                M, b = local_objective_dense(theta[j][p], dual[j][p], z, y, [theta[i][p] for i in adjacency[j]],
                                             rho, eta, reg)
                new_theta[j][p] = np.linalg.solve(M, b)
                cum[j][p] += (y - theta[j][p] @ z) ** 2 + reg * theta[j][p] @ theta[j][p]
        for j in range(J):
            for p in range(P):
                for i in adjacency[j]:
                    dual[j][p] = dual[j][p] + rho / 2.0 * (new_theta[j][p] - new_theta[i][p])
        theta = new_theta
        for j in range(J):
            w = [math.exp(-cum[j][p] / eta_g) * math.prod(math.exp(-cum[i][p] / eta_g) for i in adjacency[j])
                 for p in range(P)]
            s = sum(w)
            q[j] = [v / s for v in w]
    return preds, np.array([[theta[j][p] for p in range(P)] for j in range(J)])
