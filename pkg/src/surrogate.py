# src/surrogate.py
"""
Depth-limited decision tree fitted on the classifier's latent features, kept
as a plain node list so it can be exported, parsed back and rendered.

Splits are greedy CART: at each node every feature is scanned in index order
and every midpoint between consecutive distinct values is scored. Equal-gain
candidates go to the lowest feature index, then the lowest threshold, so the
tree is a pure function of the data.
"""
from __future__ import annotations

import json
import logging
import os
import pickle
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import joblib
import numpy as np

from .csi_data import CLASS_NAMES
from .errors import CheckpointError, ContractError

log = logging.getLogger("csihar.surrogate")

TREE_FORMAT = "csihar-surrogate-tree"
CRITERIA = ("gini", "entropy")
GAIN_TOL = 1e-12


@dataclass
class TreeNode:
    node_id: int
    class_counts: List[int]
    impurity: float
    n_samples: int
    feature: Optional[int] = None        # None on leaves
    threshold: Optional[float] = None    # go left when x[feature] <= threshold
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def majority(self) -> int:
        return int(np.argmax(self.class_counts))


@dataclass(eq=False)
class SurrogateTree:
    nodes: List[TreeNode]
    feature_names: List[str]
    class_names: List[str]
    max_depth: int = 3
    criterion: str = "gini"

    def _depth(self, node_id: int) -> int:
        node = self.nodes[node_id]
        if node.is_leaf:
            return 0
        return 1 + max(self._depth(node.left), self._depth(node.right))

    @property
    def depth(self) -> int:
        return self._depth(0)

    @property
    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    def leaf_ids(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i, row in enumerate(X):
            node = self.nodes[0]
            while not node.is_leaf:
                node = self.nodes[node.left if row[node.feature] <= node.threshold else node.right]
            out[i] = node.node_id
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.nodes[i].majority for i in self.leaf_ids(X)], dtype=np.int64)

    def score(self, X: np.ndarray, y: Sequence[int]) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def label(self, node: TreeNode) -> str:
        if node.is_leaf:
            return self.class_names[node.majority]
        return f"{self.feature_names[node.feature]} ≤ {node.threshold:.4g}"


# ---------- fitting ----------
def impurity(counts: np.ndarray, criterion: str = "gini") -> np.ndarray:
    """Row-wise impurity of class-count rows (..., K); entropy is in bits."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, n, out=np.zeros_like(counts), where=n > 0)
    if criterion == "gini":
        return 1.0 - np.sum(p * p, axis=-1)
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -np.sum(p * logs, axis=-1)


def _best_split(X: np.ndarray, onehot: np.ndarray, criterion: str) -> Optional[Tuple[int, float, float]]:
    """(feature, threshold, gain) of the best cut, or None when nothing lowers impurity."""
    n = onehot.shape[0]
    total = onehot.sum(axis=0)
    parent = float(impurity(total, criterion))
    n_left = np.arange(1, n, dtype=np.float64)
    best: Optional[Tuple[int, float, float]] = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        distinct = xs[1:] > xs[:-1]
        if not distinct.any():
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]
        child = (n_left * impurity(left, criterion) + (n - n_left) * impurity(total - left, criterion)) / n
        gain = np.where(distinct, parent - child, -np.inf)
        # first cut within tolerance of this feature's best = lowest threshold
        i = int(np.flatnonzero(gain >= gain.max() - GAIN_TOL)[0])
        if best is None or gain[i] > best[2] + GAIN_TOL:
            thr = (xs[i] + xs[i + 1]) / 2.0
            if thr >= xs[i + 1]:
                thr = xs[i]
            best = (f, float(thr), float(gain[i]))
    if best is None or best[2] <= GAIN_TOL:
        return None
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int, num_classes: int,
          criterion: str, nodes: List[TreeNode]) -> int:
    counts = np.bincount(y, minlength=num_classes)
    node = TreeNode(node_id=len(nodes), class_counts=counts.tolist(),
                    impurity=float(impurity(counts, criterion)), n_samples=int(y.size))
    nodes.append(node)
    if depth >= max_depth or node.impurity <= GAIN_TOL:
        return node.node_id
    onehot = np.eye(num_classes, dtype=np.float64)[y]
    split = _best_split(X, onehot, criterion)
    if split is None:
        return node.node_id
    node.feature, node.threshold, _ = split
    go_left = X[:, node.feature] <= node.threshold
    node.left = _grow(X[go_left], y[go_left], depth + 1, max_depth, num_classes, criterion, nodes)
    node.right = _grow(X[~go_left], y[~go_left], depth + 1, max_depth, num_classes, criterion, nodes)
    return node.node_id


def fit_surrogate_tree(
    features: np.ndarray,
    labels: Sequence[int],
    max_depth: int = 3,
    seed: int = 0,
    criterion: str = "gini",
    feature_names: Optional[Sequence[str]] = None,
    class_names: Optional[Sequence[str]] = None,
) -> SurrogateTree:
    """
    Greedy impurity-minimizing binary tree, depth <= max_depth. Fitting draws
    no randomness; seed is only recorded alongside the tree in manifests.
    Single-class data gives a single leaf.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ContractError("surrogate tree needs a non-empty (n, d) feature matrix")
    if y.shape != (X.shape[0],):
        raise ContractError(f"{X.shape[0]} feature rows but {y.size} labels")
    if not np.all(np.isfinite(X)):
        raise ContractError("surrogate tree features must be finite")
    names = list(class_names) if class_names is not None else list(CLASS_NAMES)
    if np.any(y < 0) or np.any(y >= len(names)):
        raise ContractError("surrogate tree takes in-distribution labels only")
    if max_depth < 1:
        raise ContractError("max_depth must be >= 1")
    if criterion not in CRITERIA:
        raise ContractError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    fnames = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    if len(fnames) != X.shape[1]:
        raise ContractError(f"{len(fnames)} feature names for {X.shape[1]} features")

    nodes: List[TreeNode] = []
    _grow(X, y, 0, max_depth, len(names), criterion, nodes)
    tree = SurrogateTree(nodes=nodes, feature_names=fnames, class_names=names,
                         max_depth=max_depth, criterion=criterion)
    log.info("[tree] depth=%d leaves=%d train acc=%.3f (seed %d)", tree.depth, tree.n_leaves, tree.score(X, y), seed)
    return tree


# ---------- export ----------
def render_text(tree: SurrogateTree) -> str:
    lines: List[str] = []

    def walk(node_id: int, indent: int) -> None:
        node = tree.nodes[node_id]
        pad = "|   " * indent
        if node.is_leaf:
            counts = ", ".join(f"{c}={n}" for c, n in zip(tree.class_names, node.class_counts))
            lines.append(f"{pad}leaf: {tree.label(node)} ({counts})")
            return
        lines.append(f"{pad}{tree.label(node)}")
        walk(node.left, indent + 1)
        lines.append(f"{pad}{tree.feature_names[node.feature]} > {node.threshold:.4g}")
        walk(node.right, indent + 1)

    walk(0, 0)
    return "\n".join(lines) + "\n"


def export_tree(tree: SurrogateTree) -> Dict[str, Any]:
    """JSON-ready description; "text" holds the human-readable rendering."""
    nodes = []
    for n in tree.nodes:
        d = asdict(n)
        d["label"] = tree.label(n)
        nodes.append(d)
    return {
        "format": TREE_FORMAT,
        "feature_names": list(tree.feature_names),
        "class_names": list(tree.class_names),
        "max_depth": tree.max_depth,
        "criterion": tree.criterion,
        "nodes": nodes,
        "text": render_text(tree),
    }


def parse_tree(raw: str | Dict[str, Any]) -> SurrogateTree:
    data = json.loads(raw) if isinstance(raw, str) else raw
    if data.get("format") != TREE_FORMAT:
        raise ContractError("not an exported surrogate tree")
    fields = set(TreeNode.__dataclass_fields__)
    nodes = [TreeNode(**{k: v for k, v in n.items() if k in fields}) for n in data["nodes"]]
    for i, n in enumerate(nodes):
        if n.node_id != i:
            raise ContractError(f"node ids must be dense and ordered; found {n.node_id} at {i}")
    return SurrogateTree(nodes=nodes, feature_names=list(data["feature_names"]),
                         class_names=list(data["class_names"]), max_depth=int(data["max_depth"]),
                         criterion=data.get("criterion", "gini"))


def save_tree(tree: SurrogateTree, path: str | os.PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump({"export": export_tree(tree)}, p)
    return p


def load_tree(path: str | os.PathLike) -> SurrogateTree:
    try:
        payload = joblib.load(path)
    except (OSError, EOFError, ValueError, pickle.UnpicklingError) as e:
        raise CheckpointError(f"unreadable surrogate tree {path}: {e}") from e
    if not isinstance(payload, dict) or "export" not in payload:
        raise CheckpointError(f"{path} does not hold a surrogate tree")
    return parse_tree(payload["export"])
