"""Shared builders for the test suite."""
import numpy as np

from hsvi.model import make_model
from hsvi.theory import random_model


def sparse_random_model(seed, num_states=6, num_actions=3, num_observations=3, discount=0.9):
    """Random model with sparse transitions so that masks and partial supports occur."""
    rng = np.random.default_rng(seed)
    T = np.zeros((num_actions, num_states, num_states))
    for a in range(num_actions):
        for s in range(num_states):
            k = rng.integers(1, 3)
            nxt = rng.choice(num_states, size=k, replace=False)
            T[a, s, nxt] = rng.dirichlet(np.ones(k))
    O = np.zeros((num_actions, num_states, num_observations))
    for a in range(num_actions):
        for s in range(num_states):
            k = rng.integers(1, num_observations + 1)
            zs = rng.choice(num_observations, size=k, replace=False)
            O[a, s, zs] = rng.dirichlet(np.ones(k))
    R = rng.uniform(-1, 1, size=(num_states, num_actions))
    return make_model(T, O, R, discount, name=f"sparse-{seed}")


def small_models(tiger, rocksample_2_1):
    return [tiger, rocksample_2_1, random_model(seed=0), random_model(seed=1, num_states=3),
            sparse_random_model(0), sparse_random_model(1)]


def random_belief(rng, num_states, sparse=True):
    k = int(rng.integers(1, num_states + 1)) if sparse else num_states
    idx = rng.choice(num_states, size=k, replace=False)
    vec = np.zeros(num_states)
    vec[idx] = rng.dirichlet(np.ones(k))
    return vec


def dense_matrices(model):
    """(T[a,s,s'], O[a,s',z]) as dense arrays."""
    T = np.stack([m.toarray() for m in model.transition])
    O = np.stack([m.toarray() for m in model.observation])
    return T, O


ZERO_TOL = 1e-12


def brute_force_backup(model, vectors, b):
    """Dense one-step Bellman backup at belief ``b`` with Gamma-max continuation.

    ``vectors`` is a list of (dense values, mask or None). A vector may serve a
    child belief only if the child's support lies inside its mask. Returns
    (value, action, full-length backed-up vector).
    """
    T, O = dense_matrices(model)
    S = model.num_states
    best = (-np.inf, None, None)
    for a in range(model.num_actions):
        pred = b @ T[a]
        beta = model.reward[:, a].astype(float).copy()
        for z in range(model.num_observations):
            joint = pred * O[a][:, z]
            pz = joint.sum()
            if pz <= ZERO_TOL:
                continue
            supp = joint > ZERO_TOL * pz
            choice, choice_val = None, -np.inf
            for values, mask in vectors:
                if mask is not None:
                    allowed = np.zeros(S, dtype=bool)
                    allowed[mask] = True
                    if not allowed[supp].all():
                        continue
                v = float(joint[supp] @ values[supp])
                if v > choice_val:
                    choice, choice_val = (values, supp), v
            values, supp_z = choice
            cont = np.where(supp_z, np.nan_to_num(values), 0.0)
            beta = beta + model.discount * (T[a] @ (O[a][:, z] * cont))
        val = float(b @ beta)
        if val > best[0]:
            best = (val, a, beta)
    return best


def tiger_vstar_bracket(model, grid_size=401, iters=1500):
    """(lower, upper) on V*(uniform) for a two-state model from a belief grid.

    Lower: point-based alpha-vector iteration on the grid points (a valid
    lower bound from a pessimistic start). Upper: linear interpolation of grid
    values under the Bellman operator from an optimistic start (valid because
    V* is convex).
    """
    T, O = dense_matrices(model)
    R = np.asarray(model.reward, dtype=float)
    gamma = model.discount
    A, Z = model.num_actions, model.num_observations
    p = np.linspace(0.0, 1.0, grid_size)
    B = np.column_stack([p, 1 - p])
    M = np.array([[T[a] * O[a][:, z][None, :] for z in range(Z)] for a in range(A)])

    gam = np.full((1, 2), R.min() / (1 - gamma))
    for _ in range(iters):
        new = []
        for a in range(A):
            acc = np.repeat(R[:, a][None, :], B.shape[0], axis=0)
            for z in range(Z):
                proj = gam @ M[a, z].T
                pick = np.argmax(B @ proj.T, axis=1)
                acc = acc + gamma * proj[pick]
            new.append(acc)
        new = np.stack(new)
        vals = np.einsum("ans,ns->an", new, B)
        best = np.argmax(vals, axis=0)
        gam = np.unique(new[best, np.arange(B.shape[0])], axis=0)
    lower = float(np.max(gam @ np.array([0.5, 0.5])))

    U = np.full(grid_size, R.max() / (1 - gamma))
    for _ in range(iters):
        q = np.empty((A, grid_size))
        for a in range(A):
            pred = B @ T[a]
            q[a] = B @ R[:, a]
            for z in range(Z):
                joint = pred * O[a][:, z][None, :]
                pz = joint.sum(axis=1)
                ok = pz > ZERO_TOL
                child_p = np.where(ok, joint[:, 0] / np.where(ok, pz, 1.0), 0.0)
                q[a] += gamma * np.where(ok, pz * np.interp(child_p, p, U), 0.0)
        U = q.max(axis=0)
    upper = float(np.interp(0.5, p, U))
    return lower, upper
