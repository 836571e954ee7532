import numpy as np

from rump.market import build_tree, load_market
from rump.one_period import OnePeriodProblem, admissible_p_star
from rump.utility import (
    AECertificate,
    Affine,
    MonotoneUtility,
    NegInfPlateau,
    PiecewiseUtility,
    SignedPower,
    ce_utility,
    s_shape_utility,
)

# Exponents shared by every generated utility.
GAMMA_LO = 0.5
GAMMA_HI = 1.5


def ce_problem(q=0.6):
    """One-period problem of the jump utility on the +1/-1 market."""
    u = ce_utility()
    return OnePeriodProblem(
        Y=[[1.0], [-1.0]],
        vertices=[[q, 1 - q]],
        p_star=[q, 1 - q],
        V=(u, u),
        C=[1.0, 1.0],
        certificate=AECertificate(gamma_lo=0.5, gamma_hi=1.0, C=1.0),
        labels=("up", "dn"),
    )


def s_shape_problem(p=0.5):
    u = s_shape_utility()
    return OnePeriodProblem(
        Y=[[1.0], [-1.0]],
        vertices=[[p, 1 - p]],
        p_star=[p, 1 - p],
        V=(u, u),
        C=[0.0, 0.0],
        certificate=AECertificate(gamma_lo=GAMMA_LO, gamma_hi=GAMMA_HI, C=0.0),
        labels=("up", "dn"),
    )


def random_growth_utility(rng, jump=True):
    """
    Random utility satisfying the growth condition with gammas 1/2 and 3/2.

    ``k + a x**0.5`` above zero and ``-m - b |x|**1.5`` below, with the value
    at zero somewhere in [-m, k].

    Parameters
    ----------
    rng : np.random.Generator
    jump : bool
        When False, k = m = 0 and the utility is continuous.

    Returns
    -------
    utility : PiecewiseUtility
    C : float
        A constant for which the growth condition holds, at least m.
    """
    a = float(rng.integers(1, 5)) / 2
    b = float(rng.integers(1, 5)) / 2
    k = float(rng.integers(0, 3)) / 2 if jump else 0.0
    m = float(rng.integers(0, 3)) / 2 if jump else 0.0
    value = float(rng.choice([-m, k, (k - m) / 2]))
    utility = PiecewiseUtility(
        [0.0],
        [SignedPower(a=b, c=0.0, gamma=1.5, k=-m), SignedPower(a=a, c=0.0, gamma=0.5, k=k)],
        values=[value],
    )
    return utility, m


def _dyadic(rng, shape, scale=2.0):
    return rng.integers(-4 * scale, 4 * scale + 1, size=shape) / 4.0


def random_one_period_problem(seed, max_atoms=6, max_vertices=3, assets=None, jump=True, max_tries=200):
    """
    Random admissible one-period problem.

    Parameters
    ----------
    seed : int
        Random seed.
    max_atoms : int
        At most this many atoms, at least assets + 1.
    max_vertices : int
        At most this many prior vertices.
    assets : int, optional
        1 or 2; drawn when omitted.
    jump : bool
        Whether utilities may jump at zero.
    max_tries : int
        Resampling attempts before giving up.

    Returns
    -------
    OnePeriodProblem
        Dyadic increments, strictly positive vertices and a designated prior
        whose support keeps 0 in its relative interior.
    """
    rng = np.random.default_rng(seed)
    d = int(assets) if assets is not None else int(rng.integers(1, 3))
    for _ in range(max_tries):
        m = int(rng.integers(d + 1, max_atoms + 1))
        Y = _dyadic(rng, (m, d))
        if np.unique(Y, axis=0).shape[0] < m:
            continue
        n_vertices = int(rng.integers(1, max_vertices + 1))
        vertices = rng.dirichlet(np.ones(m), size=n_vertices)
        vertices = vertices / vertices.sum(axis=1, keepdims=True)
        p_star = admissible_p_star(Y, vertices)
        if p_star is None:
            continue
        functions, constants = zip(*[random_growth_utility(rng, jump) for _ in range(m)])
        return OnePeriodProblem(
            Y=Y,
            vertices=vertices,
            p_star=p_star,
            V=functions,
            C=np.array(constants),
            certificate=AECertificate(gamma_lo=GAMMA_LO, gamma_hi=GAMMA_HI, C=0.0),
        )
    raise RuntimeError(f"no admissible instance found for seed {seed}")


def random_tree_document(seed, horizon=2, max_children=3, max_vertices=2, singleton=False):
    """
    Random one-asset market document where every node is arbitrage free.

    Each node gets at least one up and one down move, so 0 lies in the
    interior of every conditional support.

    Parameters
    ----------
    seed : int
        Random seed.
    horizon : int
    max_children : int
        At least two children per node.
    max_vertices : int
    singleton : bool
        One prior vertex per node.

    Returns
    -------
    dict
        Document accepted by ``load_market``.
    """
    rng = np.random.default_rng(seed)
    nodes = []
    frontier = [((), 0.0)]
    while frontier:
        path, price = frontier.pop(0)
        entry = {"path": list(path), "price": [price]}
        if len(path) < horizon:
            n = int(rng.integers(2, max_children + 1))
            steps = [float(rng.integers(1, 5)) / 4, -float(rng.integers(1, 5)) / 4]
            steps += [float(s) for s in _dyadic(rng, n - 2, scale=1.0)]
            labels = [f"c{i}" for i in range(n)]
            n_vertices = 1 if singleton else int(rng.integers(1, max_vertices + 1))
            vertices = rng.dirichlet(np.ones(n), size=n_vertices)
            vertices = np.round(vertices * 64) / 64
            vertices = np.maximum(vertices, 1 / 64)
            vertices[:, -1] = 1 - vertices[:, :-1].sum(axis=1)
            if (vertices[:, -1] <= 0).any():
                vertices = np.full((n_vertices, n), 1.0 / n)
            entry["children"] = labels
            entry["prior_vertices"] = vertices.tolist()
            frontier.extend((path + (c,), price + s) for c, s in zip(labels, steps))
        nodes.append(entry)
    return {"horizon": horizon, "assets": 1, "nodes": nodes}


def random_tree(seed, **kwargs):
    return load_market(random_tree_document(seed, **kwargs))


def s_shape_tree(horizon=1, p=0.5):
    """Symmetric +1/-1 tree with the S-shape utility."""
    tree, priors = build_tree(horizon, {"up": [1.0], "dn": [-1.0]}, [[p, 1 - p]])
    return tree, priors, MonotoneUtility(s_shape_utility())


def plateau_utility(level=2.0):
    """-inf below ``level``, the identity from ``level`` on."""
    return MonotoneUtility(PiecewiseUtility([level], [NegInfPlateau(), Affine(a=1.0, k=0.0)], values="right"))

