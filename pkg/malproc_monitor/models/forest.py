"""Random forest of CART trees (Gini impurity) for single-snapshot classification."""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ..exceptions import ConfigurationError, InvalidInputError
from ..telemetry.features import FEATURE_COUNT

logger = logging.getLogger("model.forest")

FORMAT_TAG = "malproc-forest/1"
LEAF = -1
MIN_GAIN = 1e-12


class ForestConfig(BaseModel):
    """Forest training settings."""

    n_trees: int = Field(default=100, ge=1)
    max_depth: int = Field(default=16, ge=0)
    min_samples_leaf: int = Field(default=5, ge=1)
    max_features: Optional[int] = Field(default=None, ge=1, description="Default ceil(sqrt(n_features))")
    seed: int = Field(default=0, ge=0)
    n_jobs: int = Field(default=1, ge=1, description="Threads building trees")
    allow_single_class: bool = Field(default=False)
    subsample: Optional[float] = Field(
        default=None, gt=0.0, le=1.0, description="Fraction of labeled snapshots kept for training"
    )


def gini(counts: Sequence[float]) -> float:
    """Gini impurity 1 - Σ p_k² of class counts."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _majority(labels: np.ndarray) -> int:
    return int(labels.sum() * 2 > len(labels))


@dataclass
class DecisionTree:
    """Flat node arrays; leaves have feature == -1 and carry ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    seed: int = 0

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] == LEAF:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    def predict_one(self, x: Sequence[float]) -> int:
        node = 0
        while self.feature[node] != LEAF:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return int(self.value[node])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.predict_one(row) for row in X], dtype=np.int64)

    def to_nodes(self) -> List[List[Union[int, float]]]:
        return [
            [int(f), float(t), int(l), int(r), int(v)]
            for f, t, l, r, v in zip(self.feature, self.threshold, self.left, self.right, self.value)
        ]

    @classmethod
    def from_nodes(cls, nodes: Sequence[Sequence], seed: int = 0, n_features: int = FEATURE_COUNT) -> "DecisionTree":
        if not nodes:
            raise InvalidInputError("A tree needs at least one node")
        arr = list(zip(*nodes))
        tree = cls(
            feature=np.asarray(arr[0], dtype=np.int64),
            threshold=np.asarray(arr[1], dtype=np.float64),
            left=np.asarray(arr[2], dtype=np.int64),
            right=np.asarray(arr[3], dtype=np.int64),
            value=np.asarray(arr[4], dtype=np.int64),
            seed=seed,
        )
        tree.validate(n_features)
        return tree

    def validate(self, n_features: int = FEATURE_COUNT):
        n = self.node_count
        splits = self.feature != LEAF
        if np.any(self.feature[splits] >= n_features) or np.any(self.feature < LEAF):
            raise InvalidInputError("Tree references a feature outside the schema")
        if not np.all(np.isfinite(self.threshold)):
            raise InvalidInputError("Tree thresholds must be finite")
        children = np.concatenate([self.left[splits], self.right[splits]])
        if np.any(children <= 0) or np.any(children >= n):
            raise InvalidInputError("Tree child index out of range")
        if np.any(~np.isin(self.value[~splits], (0, 1))):
            raise InvalidInputError("Tree leaves must predict 0 or 1")


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_features: int,
    min_samples_leaf: int,
) -> Optional[Tuple[int, float, float]]:
    """(feature, threshold, gain) of the best Gini split, or None.

    Features are visited in a random order until ``max_features`` non-constant
    ones have been evaluated.
    """
    n = len(y)
    parent = gini([n - y.sum(), y.sum()])
    best: Optional[Tuple[int, float, float]] = None
    evaluated = 0
    for feature in rng.permutation(X.shape[1]):
        column = X[:, feature]
        if column.min() == column.max():
            continue
        evaluated += 1

        order = np.argsort(column, kind="stable")
        values = column[order]
        positives = np.cumsum(y[order])
        left_n = np.arange(1, n)
        left_pos = positives[:-1]
        right_n = n - left_n
        right_pos = positives[-1] - left_pos

        valid = (values[1:] > values[:-1]) & (left_n >= min_samples_leaf) & (right_n >= min_samples_leaf)
        if np.any(valid):
            left_p = left_pos / left_n
            right_p = right_pos / right_n
            left_gini = 2.0 * left_p * (1.0 - left_p)
            right_gini = 2.0 * right_p * (1.0 - right_p)
            weighted = (left_n * left_gini + right_n * right_gini) / n
            gains = np.where(valid, parent - weighted, -np.inf)
            split = int(np.argmax(gains))
            gain = float(gains[split])
            if best is None or gain > best[2]:
                low, high = values[split], values[split + 1]
                threshold = (low + high) / 2.0
                if not threshold < high:
                    threshold = low
                best = (int(feature), float(threshold), gain)

        if evaluated >= max_features:
            break
    return best


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig,
    seed: int,
    bootstrap: bool = True,
) -> DecisionTree:
    """Grow one tree on a bootstrap resample of (X, y)."""
    rng = np.random.default_rng(seed)
    n, n_features = X.shape
    if bootstrap:
        rows = rng.integers(0, n, n)
        X, y = X[rows], y[rows]
    max_features = config.max_features or math.ceil(math.sqrt(n_features))

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[int] = []

    def new_node() -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        labels = y[rows]
        value[node] = _majority(labels)
        positives = labels.sum()
        if depth >= config.max_depth or positives in (0, len(labels)) or len(labels) < 2 * config.min_samples_leaf:
            continue
        split = _best_split(X[rows], labels, rng, max_features, config.min_samples_leaf)
        if split is None or split[2] <= MIN_GAIN:
            continue
        f, t, _ = split
        go_left = X[rows, f] <= t
        feature[node], threshold[node] = f, t
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], rows[~go_left], depth + 1))
        stack.append((left[node], rows[go_left], depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.int64),
        seed=seed,
    )


@dataclass
class ForestClassifier:
    """Majority vote of decision trees over raw snapshot features; ties vote benign."""

    trees: List[DecisionTree]
    config: ForestConfig = field(default_factory=ForestConfig)
    n_features: int = FEATURE_COUNT
    threshold: float = 0.5
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.trees:
            raise ConfigurationError("A forest needs at least one tree")
        self._pack()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def seeds(self) -> List[int]:
        return [tree.seed for tree in self.trees]

    def _pack(self):
        """Concatenate every tree's nodes so all trees step together."""
        offsets = np.cumsum([0] + [t.node_count for t in self.trees[:-1]])
        self._roots = offsets.astype(np.int64)
        self._feature = np.concatenate([t.feature for t in self.trees])
        self._threshold = np.concatenate([t.threshold for t in self.trees])
        self._value = np.concatenate([t.value for t in self.trees])
        self._left = np.concatenate([np.where(t.feature == LEAF, LEAF, t.left + o) for t, o in zip(self.trees, offsets)])
        self._right = np.concatenate([np.where(t.feature == LEAF, LEAF, t.right + o) for t, o in zip(self.trees, offsets)])
        self._max_depth = max(t.depth for t in self.trees)

    def _check_arity(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InvalidInputError(
                f"Forest expects {self.n_features} features per snapshot, got shape {X.shape}"
            )
        return X

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Number of trees voting malicious for each row."""
        X = self._check_arity(X)
        rows = np.arange(len(X))[:, None]
        nodes = np.broadcast_to(self._roots, (len(X), self.n_trees)).copy()
        for _ in range(self._max_depth):
            feature = self._feature[nodes]
            inner = feature != LEAF
            if not inner.any():
                break
            x = X[rows, np.where(inner, feature, 0)]
            go_left = x <= self._threshold[nodes]
            step = np.where(go_left, self._left[nodes], self._right[nodes])
            nodes = np.where(inner, step, nodes)
        return self._value[nodes].sum(axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (2 * self.votes(X) > self.n_trees).astype(np.int64)

    # Serialization

    def to_document(self) -> Dict[str, Any]:
        return {
            "format": FORMAT_TAG,
            "config": self.config.model_dump(),
            "n_features": self.n_features,
            "threshold": self.threshold,
            "metadata": self.metadata,
            "trees": [{"seed": int(t.seed), "nodes": t.to_nodes()} for t in self.trees],
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "ForestClassifier":
        if document.get("format") != FORMAT_TAG:
            raise InvalidInputError(
                f"Not a forest document (format {document.get('format')!r}, expected {FORMAT_TAG!r})"
            )
        try:
            n_features = int(document["n_features"])
            trees = [
                DecisionTree.from_nodes(t["nodes"], seed=int(t["seed"]), n_features=n_features)
                for t in document["trees"]
            ]
            return cls(
                trees=trees,
                config=ForestConfig(**document["config"]),
                n_features=n_features,
                threshold=float(document.get("threshold", 0.5)),
                metadata=dict(document.get("metadata", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"Invalid forest document: {e}") from e

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_document(), fh, sort_keys=True)
        logger.info(f"Saved forest of {self.n_trees} trees to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ForestClassifier":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Model file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"Model file {path} is not valid JSON: {e}") from e
        return cls.from_document(document)


def forest_predict(forest: ForestClassifier, snapshot: Sequence[float]) -> int:
    """Majority vote for one raw feature vector; exact ties are benign."""
    return int(forest.predict(np.asarray(snapshot, dtype=np.float64))[0])


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    config: Optional[ForestConfig] = None,
) -> ForestClassifier:
    """Grow ``config.n_trees`` trees, each on its own seeded bootstrap sample."""
    config = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if not len(y):
        raise InvalidInputError("Cannot train a forest on an empty dataset")
    if X.ndim != 2 or len(X) != len(y):
        raise InvalidInputError(f"Features {X.shape} do not match {len(y)} labels")
    classes = set(np.unique(y).tolist())
    if not classes <= {0, 1}:
        raise InvalidInputError(f"Labels must be 0 or 1, got {sorted(classes)}")
    if len(classes) < 2 and not config.allow_single_class:
        raise InvalidInputError("Forest training data holds a single class")

    seeds = np.random.default_rng(config.seed).integers(0, 2**31 - 1, size=config.n_trees)
    logger.info(
        f"Training forest: {config.n_trees} trees on {len(y)} snapshots "
        f"({int(y.sum())} positive), depth <= {config.max_depth}"
    )
    with ThreadPoolExecutor(max_workers=config.n_jobs) as executor:
        trees = list(executor.map(lambda s: build_tree(X, y, config, int(s)), seeds))
    return ForestClassifier(trees=trees, config=config, n_features=X.shape[1])
