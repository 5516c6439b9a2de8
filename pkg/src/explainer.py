# src/explainer.py
"""
Which latent features drive the surrogate tree.

Chain: SHAP TreeExplainer on the node list (mean |SHAP| over samples and
classes), then the impurity decrease each feature contributes.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

import numpy as np
import shap

from .surrogate import SurrogateTree

log = logging.getLogger("csihar.explainer")

TOP_K_DEFAULT = 5


def shap_tree_model(tree: SurrogateTree) -> Dict[str, Any]:
    """The tree in the dictionary layout shap.TreeExplainer accepts."""
    nodes = tree.nodes
    counts = np.array([n.class_counts for n in nodes], dtype=np.float64)
    left = np.array([-1 if n.is_leaf else n.left for n in nodes], dtype=np.int32)
    return {"trees": [{
        "children_left": left,
        "children_right": np.array([-1 if n.is_leaf else n.right for n in nodes], dtype=np.int32),
        "children_default": left.copy(),
        "features": np.array([-2 if n.is_leaf else n.feature for n in nodes], dtype=np.int32),
        "thresholds": np.array([0.0 if n.is_leaf else n.threshold for n in nodes], dtype=np.float64),
        "values": counts / counts.sum(axis=1, keepdims=True),
        "node_sample_weight": np.array([n.n_samples for n in nodes], dtype=np.float64),
    }]}


class TreeAttribution:
    def __init__(self, tree: SurrogateTree):
        self.tree = tree
        # exact for trees; a single leaf has nothing to attribute
        self.tree_explainer = None
        if tree.depth > 0:
            try:
                self.tree_explainer = shap.TreeExplainer(shap_tree_model(tree))
            except Exception as e:
                log.debug("[explain] TreeExplainer unavailable: %s", e)

    def _shap_importance(self, X: np.ndarray) -> np.ndarray:
        if self.tree_explainer is None:
            raise RuntimeError("no tree explainer")
        vals = self.tree_explainer.shap_values(X)
        # multiclass: list of (n, f) per class in older shap, (n, f, K) array in newer
        if isinstance(vals, list):
            return np.mean(np.abs(np.stack(vals)), axis=(0, 1))
        arr = np.abs(np.asarray(vals, dtype=float))
        if arr.ndim == 3:
            return arr.mean(axis=(0, 2))
        return arr.mean(axis=0)

    def _node_importance(self) -> np.ndarray:
        imp = np.zeros(len(self.tree.feature_names))
        nodes = self.tree.nodes
        for n in nodes:
            if n.is_leaf:
                continue
            l, r = nodes[n.left], nodes[n.right]
            imp[n.feature] += (n.n_samples * n.impurity - l.n_samples * l.impurity - r.n_samples * r.impurity)
        total = imp.sum()
        return imp / total if total > 0 else imp

    def importances(self, X: Optional[np.ndarray] = None) -> tuple[np.ndarray, str]:
        if X is not None and len(X):
            try:
                return self._shap_importance(np.asarray(X, dtype=float)), "shap"
            except Exception as e:
                log.debug("[explain] SHAP failed, falling back: %s", e)
        return self._node_importance(), "impurity_decrease"

    def explain(self, X: Optional[np.ndarray] = None, top_k: Optional[int] = None) -> Dict:
        values, method = self.importances(X)
        k = len(values) if top_k is None else max(1, min(int(top_k), len(values)))
        # stable sort keeps feature order among equal importances
        order = np.argsort(-values, kind="stable")[:k]
        top: List[Dict] = [{"feature": self.tree.feature_names[int(i)], "importance": float(values[int(i)])}
                           for i in order]
        return {"method": method, "top_features": top}


def explain_tree(tree: SurrogateTree, X: Optional[np.ndarray] = None, top_k: int = TOP_K_DEFAULT) -> Dict:
    return TreeAttribution(tree).explain(X, top_k)
