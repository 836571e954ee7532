"""Finite discrete-time market: scenario tree, prior vertex sets, kernels."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .custom_exceptions import (
    EmptyVertexListError,
    InvalidArgumentError,
    NegativeProbabilityError,
    OrphanNodeError,
    ProbabilitySumError,
    SchemaError,
    UnknownNodeError,
)

logger = logging.getLogger(__name__)

Path = Tuple[str, ...]

# Tolerance on the total mass of a prior vertex or kernel entry.
PROBABILITY_TOLERANCE = 1e-12


def path_str(path: Path) -> str:
    return "/" + "/".join(path)


def parse_path(text: str) -> Path:
    return tuple(p for p in text.strip("/").split("/") if p)


@dataclass(frozen=True, eq=False)
class Node:
    path: Path
    price: np.ndarray
    children: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Event tree with a price vector at every node.

    Nodes are addressed by the tuple of child labels leading to them from the
    root, the root being ``()``.
    """

    horizon: int
    assets: int
    nodes: Mapping[Path, Node] = field(repr=False)

    def node(self, path: Path) -> Node:
        try:
            return self.nodes[tuple(path)]
        except KeyError:
            raise UnknownNodeError(path_str(tuple(path)))

    def is_terminal(self, path: Path) -> bool:
        return len(path) == self.horizon

    def child_paths(self, path: Path) -> List[Path]:
        return [tuple(path) + (c,) for c in self.node(path).children]

    def paths_at_depth(self, t: int) -> List[Path]:
        return [p for p in self.nodes if len(p) == t]

    def non_terminal_paths(self) -> List[Path]:
        return [p for p in self.nodes if len(p) < self.horizon]

    def terminal_paths(self) -> List[Path]:
        return self.paths_at_depth(self.horizon)

    def delta_s(self, path: Path, child: str) -> np.ndarray:
        """Price increment from a node to one of its children."""
        node = self.node(path)
        if self.is_terminal(node.path) or child not in node.children:
            raise UnknownNodeError(path_str(node.path + (child,)), "Unknown child")
        return self.node(node.path + (child,)).price - node.price

    def increments(self, path: Path) -> np.ndarray:
        """Increments to all children, one row per child in label order."""
        node = self.node(path)
        return np.array([self.delta_s(node.path, c) for c in node.children]).reshape(
            len(node.children), self.assets
        )

    def __str__(self):
        return f"{self.__class__.__name__}(horizon={self.horizon}, assets={self.assets}, nodes={len(self.nodes)})"


@dataclass(frozen=True, eq=False)
class PriorSet:
    """Per non-terminal node, the vertices of the local prior polytope.

    ``vertices[path]`` has one row per vertex and one column per child.
    """

    vertices: Mapping[Path, np.ndarray] = field(repr=False)

    def at(self, path: Path) -> np.ndarray:
        try:
            return self.vertices[tuple(path)]
        except KeyError:
            raise UnknownNodeError(path_str(tuple(path)), "No priors at node")

    def charged(self, path: Path) -> np.ndarray:
        """Children with positive probability under at least one vertex."""
        return (self.at(path) > 0).any(axis=0)

    def with_vertex(self, path: Path, vertex) -> "PriorSet":
        vertices = dict(self.vertices)
        vertices[tuple(path)] = np.vstack([self.at(path), np.asarray(vertex, dtype=float)])
        return PriorSet(vertices)


@dataclass(frozen=True, eq=False)
class Kernel:
    """One local prior per node, recorded as a mixture of the node's vertices."""

    probs: Mapping[Path, np.ndarray] = field(repr=False)
    weights: Mapping[Path, np.ndarray] = field(repr=False)

    @classmethod
    def from_weights(cls, priors: PriorSet, weights: Mapping[Path, Iterable[float]]) -> "Kernel":
        probs, ws = {}, {}
        for path, w in weights.items():
            w = np.asarray(w, dtype=float)
            vertices = priors.at(path)
            if len(w) != len(vertices) or (w < 0).any():
                raise InvalidArgumentError(f"kernel weights at {path_str(path)}", "nonnegative, one per vertex")
            if abs(w.sum() - 1.0) > PROBABILITY_TOLERANCE:
                raise ProbabilitySumError(path_str(path), w.sum())
            probs[tuple(path)] = w @ vertices
            ws[tuple(path)] = w
        return cls(probs=probs, weights=ws)

    @classmethod
    def vertex_choice(cls, priors: PriorSet, choice: Mapping[Path, int]) -> "Kernel":
        weights = {}
        for path, i in choice.items():
            w = np.zeros(len(priors.at(path)))
            w[i] = 1.0
            weights[path] = w
        return cls.from_weights(priors, weights)

    def at(self, path: Path) -> np.ndarray:
        try:
            return self.probs[tuple(path)]
        except KeyError:
            raise UnknownNodeError(path_str(tuple(path)), "No kernel entry at node")

    def mix(self, priors: PriorSet, other: "Kernel", lam: float) -> "Kernel":
        """Node-wise mixture ``lam * self + (1 - lam) * other``."""
        if not 0 < lam <= 1:
            raise InvalidArgumentError("lam", "in (0, 1]")
        weights = {
            path: lam * self.weights[path] + (1 - lam) * other.weights[path] for path in self.weights
        }
        return Kernel.from_weights(priors, weights)

    def reconstruction_error(self, priors: PriorSet) -> float:
        return max(
            (float(np.max(np.abs(self.weights[p] @ priors.at(p) - self.probs[p]))) for p in self.probs),
            default=0.0,
        )


def _require(document: Mapping, key: str, where: str):
    if key not in document:
        raise SchemaError(key, "is missing", where)
    return document[key]


def load_market(document: Mapping) -> Tuple[ScenarioTree, PriorSet]:
    """Build and validate a market from its JSON document.

    Parameters
    ----------
    document: dict
        Fields ``horizon``, ``assets`` and ``nodes``; each node has ``path``,
        ``price``, ``children`` and, when non-terminal, ``prior_vertices``.

    Returns
    -------
    ScenarioTree, PriorSet
    """
    if not isinstance(document, Mapping):
        raise SchemaError("document", "must be a JSON object")
    horizon = _require(document, "horizon", "market")
    assets = _require(document, "assets", "market")
    raw_nodes = _require(document, "nodes", "market")
    if not isinstance(horizon, int) or horizon < 1:
        raise SchemaError("horizon", "must be an integer >= 1", "market")
    if not isinstance(assets, int) or assets < 1:
        raise SchemaError("assets", "must be an integer >= 1", "market")
    if not isinstance(raw_nodes, list):
        raise SchemaError("nodes", "must be a list", "market")

    nodes: Dict[Path, Node] = {}
    vertices: Dict[Path, np.ndarray] = {}
    for raw in raw_nodes:
        if not isinstance(raw, Mapping):
            raise SchemaError("nodes", "must hold JSON objects", "market")
        raw_path = _require(raw, "path", "node")
        if not isinstance(raw_path, list) or not all(isinstance(p, str) for p in raw_path):
            raise SchemaError("path", "must be a list of labels", "node")
        path = tuple(raw_path)
        where = f"node {path_str(path)}"
        if path in nodes:
            raise SchemaError("path", "is duplicated", where)
        if len(path) > horizon:
            raise SchemaError("path", f"is deeper than the horizon {horizon}", where)
        try:
            price = np.array(_require(raw, "price", where), dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise SchemaError("price", "must be an array of numbers", where)
        if price.shape != (assets,) or not np.isfinite(price).all():
            raise SchemaError("price", f"must hold {assets} finite numbers", where)
        raw_children = raw.get("children", [])
        if not isinstance(raw_children, list) or not all(isinstance(c, str) for c in raw_children):
            raise SchemaError("children", "must be a list of labels", where)
        children = tuple(raw_children)
        if len(set(children)) != len(children):
            raise SchemaError("children", "has duplicated labels", where)
        if len(path) < horizon and len(children) == 0:
            raise SchemaError("children", "must be nonempty at a non-terminal node", where)
        if len(path) == horizon and len(children) > 0:
            raise SchemaError("children", "must be empty at a terminal node", where)
        nodes[path] = Node(path=path, price=price, children=children)

        if len(path) < horizon:
            raw_vertices = _require(raw, "prior_vertices", where)
            if not isinstance(raw_vertices, list) or not all(isinstance(v, list) for v in raw_vertices):
                raise SchemaError("prior_vertices", "must be an array of arrays of numbers", where)
            if len(raw_vertices) == 0:
                raise EmptyVertexListError(path_str(path))
            try:
                vs = np.array(raw_vertices, dtype=float)
            except (TypeError, ValueError):
                raise SchemaError("prior_vertices", "must be an array of arrays of numbers", where)
            if vs.ndim != 2 or vs.shape[1] != len(children):
                raise SchemaError("prior_vertices", f"rows must have {len(children)} entries", where)
            if not np.isfinite(vs).all():
                raise SchemaError("prior_vertices", "must hold finite numbers", where)
            for v in vs:
                if (v < 0).any():
                    raise NegativeProbabilityError(path_str(path))
                if abs(v.sum() - 1.0) > PROBABILITY_TOLERANCE:
                    raise ProbabilitySumError(path_str(path), v.sum())
            vertices[path] = vs

    if () not in nodes:
        raise SchemaError("nodes", "must contain the root (empty path)", "market")
    for path, node in nodes.items():
        if path and (path[:-1] not in nodes or path[-1] not in nodes[path[:-1]].children):
            raise OrphanNodeError(path_str(path))
        for c in node.children:
            if path + (c,) not in nodes:
                raise SchemaError("children", f"lists '{c}' which is not defined", f"node {path_str(path)}")

    ordered = dict(sorted(nodes.items(), key=lambda item: (len(item[0]), item[0])))
    tree = ScenarioTree(horizon=horizon, assets=assets, nodes=ordered)
    logger.debug("Loaded %s", tree)
    return tree, PriorSet(vertices)


def read_market(path: Union[str, FilePath]) -> Tuple[ScenarioTree, PriorSet]:
    with open(path, "r") as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError("document", f"is not valid JSON ({e.msg})", str(path))
    return load_market(document)


def dump_market(tree: ScenarioTree, priors: PriorSet) -> dict:
    nodes = []
    for path, node in tree.nodes.items():
        entry = {"path": list(path), "price": [float(v) for v in node.price], "children": list(node.children)}
        if not tree.is_terminal(path):
            entry["prior_vertices"] = [[float(v) for v in row] for row in priors.at(path)]
        nodes.append(entry)
    return {"horizon": tree.horizon, "assets": tree.assets, "nodes": nodes}


def market_to_json(tree: ScenarioTree, priors: PriorSet) -> str:
    """Canonical form: sorted keys, nodes by depth then path, shortest round-trip floats."""
    return json.dumps(dump_market(tree, priors), sort_keys=True, indent=1)


def reachable_nodes(tree: ScenarioTree, priors: PriorSet) -> FrozenSet[Path]:
    """All nodes reached through transitions charged by some prior vertex."""
    reached = {()}
    frontier = [()]
    while frontier:
        path = frontier.pop()
        if tree.is_terminal(path):
            continue
        charged = priors.charged(path)
        for c, is_charged in zip(tree.node(path).children, charged):
            if is_charged:
                reached.add(path + (c,))
                frontier.append(path + (c,))
    return frozenset(reached)


def reachable_paths(tree: ScenarioTree, priors: PriorSet) -> FrozenSet[Path]:
    """Terminal paths outside every polar set of the prior family."""
    return frozenset(p for p in reachable_nodes(tree, priors) if tree.is_terminal(p))


def delta_s(tree: ScenarioTree, path: Path, child: str) -> np.ndarray:
    return tree.delta_s(path, child)


def build_tree(
    horizon: int,
    increments: Mapping[str, Iterable[float]],
    vertices: Iterable[Iterable[float]],
    start: Optional[Iterable[float]] = None,
) -> Tuple[ScenarioTree, PriorSet]:
    """Recombining-free tree with the same increments and vertices at every node."""
    labels = list(increments)
    steps = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in increments.items()}
    assets = len(next(iter(steps.values())))
    start = np.zeros(assets) if start is None else np.asarray(start, dtype=float)
    vs = [list(v) for v in vertices]
    document = {"horizon": horizon, "assets": assets, "nodes": []}
    frontier = [((), start)]
    while frontier:
        path, price = frontier.pop(0)
        entry = {"path": list(path), "price": list(price)}
        if len(path) < horizon:
            entry["children"] = labels
            entry["prior_vertices"] = vs
            frontier.extend((path + (k,), price + steps[k]) for k in labels)
        document["nodes"].append(entry)
    return load_market(document)
