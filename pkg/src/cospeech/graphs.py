"""Spatial-temporal anatomical-component (AC) graphs and collation plans.

Landmark graphs connect every pair of landmarks inside a component plus the
nearest cross-component pair(s); pose graphs connect bones that share a
joint or meet through a third bone. The temporal extent of every graph is a
window of ``temporal_window`` frames on either side, realised downstream as
the kernel of the temporal convolution.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyComponent, ShapeMismatch

DEFAULT_TEMPORAL_WINDOW = 2


@dataclass(frozen=True)
class ComponentPartition:
    component_of: tuple
    names: tuple = None

    def __post_init__(self):
        comp = tuple(int(c) for c in self.component_of)
        object.__setattr__(self, "component_of", comp)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_components(cls, components, node_count):
        """Build from ``((name, members), ...)``; every node must appear once."""
        comp = [-1] * node_count
        for c, (_, members) in enumerate(components):
            if not members:
                raise EmptyComponent(f"component {c} has no members")
            for n in members:
                if comp[n] != -1:
                    raise ValueError(f"node {n} assigned to two components")
                comp[n] = c
        if -1 in comp:
            raise ValueError(f"node {comp.index(-1)} has no component")
        return cls(tuple(comp), tuple(name for name, _ in components))

    @property
    def node_count(self):
        return len(self.component_of)

    @property
    def component_count(self):
        return max(self.component_of) + 1 if self.component_of else 0

    def members(self):
        out = [[] for _ in range(self.component_count)]
        for n, c in enumerate(self.component_of):
            if c < 0:
                raise ValueError(f"node {n} has no component")
            out[c].append(n)
        for c, m in enumerate(out):
            if not m:
                raise EmptyComponent(f"component {c} has no members")
        return out


@dataclass(frozen=True)
class CollationPlan:
    members: tuple
    pad_to: int
    node_count: int

    @classmethod
    def from_partition(cls, partition):
        members = tuple(tuple(m) for m in partition.members())
        return cls(members, max(len(m) for m in members), partition.node_count)

    @property
    def component_count(self):
        return len(self.members)

    def index_table(self):
        """``(C, pad_to)`` node indices, with ``node_count`` marking padding."""
        table = np.full((self.component_count, self.pad_to), self.node_count, dtype=np.int64)
        for c, m in enumerate(self.members):
            table[c, : len(m)] = m
        return table


@dataclass(frozen=True)
class AcGraph:
    node_count: int
    spatial_edges: tuple
    temporal_window: int = DEFAULT_TEMPORAL_WINDOW
    partition: ComponentPartition = None
    kind: str = ""

    def __post_init__(self):
        edges = sorted({(min(i, j), max(i, j)) for i, j in self.spatial_edges if i != j})
        object.__setattr__(self, "spatial_edges", tuple(edges))

    @property
    def edge_count(self):
        return len(self.spatial_edges)

    def adjacency(self, self_loops=False):
        a = np.zeros((self.node_count, self.node_count))
        for i, j in self.spatial_edges:
            a[i, j] = a[j, i] = 1.0
        if self_loops:
            a += np.eye(self.node_count)
        return a

    def normalized_adjacency(self):
        """Symmetric degree normalisation ``D^-1/2 (A + I) D^-1/2``."""
        a = self.adjacency(self_loops=True)
        d = 1.0 / np.sqrt(a.sum(axis=1))
        return a * d[:, None] * d[None, :]

    def to_dict(self):
        d = {
            "kind": self.kind,
            "node_count": self.node_count,
            "edges": [list(e) for e in self.spatial_edges],
            "temporal_window": self.temporal_window,
        }
        if self.partition is not None:
            d["partition"] = list(self.partition.component_of)
            if self.partition.names is not None:
                d["component_names"] = list(self.partition.names)
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        partition = None
        if "partition" in d:
            partition = ComponentPartition(tuple(d["partition"]), d.get("component_names"))
        return cls(
            node_count=int(d["node_count"]),
            spatial_edges=tuple(tuple(e) for e in d["edges"]),
            temporal_window=int(d["temporal_window"]),
            partition=partition,
            kind=d.get("kind", ""),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_face_landmark_graph(template, partition, temporal_window=DEFAULT_TEMPORAL_WINDOW, k_nearest=1):
    template = np.asarray(template, dtype=np.float64)
    if template.shape != (partition.node_count, 3):
        raise ShapeMismatch(f"template {template.shape} vs {partition.node_count} partitioned nodes")
    members = partition.members()
    edges = set()
    for m in members:
        edges.update(itertools.combinations(m, 2))
    for ca, cb in itertools.combinations(range(len(members)), 2):
        a = np.asarray(members[ca])
        b = np.asarray(members[cb])
        dist = np.linalg.norm(template[a][:, None] - template[b][None], axis=-1)
        # stable sort: ties resolve to the lexicographically first pair
        order = np.argsort(dist, axis=None, kind="stable")[:k_nearest]
        for flat in order:
            i, j = np.unravel_index(flat, dist.shape)
            edges.add((int(a[i]), int(b[j])))
    return AcGraph(partition.node_count, tuple(edges), temporal_window, partition, "face_landmarks")


def build_face_anatomy_graph(partition, temporal_window=DEFAULT_TEMPORAL_WINDOW):
    n = partition.component_count
    edges = tuple(itertools.combinations(range(n), 2))
    return AcGraph(n, edges, temporal_window, None, "face_anatomy")


def bone_incidence(skeleton):
    """Adjacency between bones that share a joint."""
    nb = skeleton.bone_count
    ends = [{skeleton.bone_source(b), b + 1} for b in range(nb)]
    a = np.zeros((nb, nb), dtype=int)
    for i, j in itertools.combinations(range(nb), 2):
        if ends[i] & ends[j]:
            a[i, j] = a[j, i] = 1
    return a


def build_pose_graph(skeleton, partition=None, temporal_window=DEFAULT_TEMPORAL_WINDOW):
    a = bone_incidence(skeleton)
    reach = (a + a @ a) > 0
    nb = skeleton.bone_count
    edges = tuple((i, j) for i, j in itertools.combinations(range(nb), 2) if reach[i, j])
    return AcGraph(nb, edges, temporal_window, partition, "pose_bones")


def build_pose_anatomy_graph(temporal_window=DEFAULT_TEMPORAL_WINDOW):
    """Torso (node 0) joined to each arm (nodes 1, 2); the arms are not joined."""
    return AcGraph(3, ((0, 1), (0, 2)), temporal_window, None, "pose_anatomy")


def collate(features, plan):
    """Concatenate member features per component, zero-padded to ``pad_to``."""
    x = np.asarray(features)
    if x.ndim != 3 or x.shape[1] != plan.node_count:
        raise ShapeMismatch(f"features {x.shape} do not match plan over {plan.node_count} nodes")
    t, _, d = x.shape
    padded = np.concatenate([x, np.zeros((t, 1, d), dtype=x.dtype)], axis=1)
    out = padded[:, plan.index_table()]  # (T, C, pad, D)
    return out.reshape(t, plan.component_count, plan.pad_to * d)


def decollate(collated, plan):
    x = np.asarray(collated)
    t, c, width = x.shape
    d = width // plan.pad_to
    x = x.reshape(t, c, plan.pad_to, d)
    out = np.zeros((t, plan.node_count, d), dtype=x.dtype)
    for ci, m in enumerate(plan.members):
        out[:, list(m)] = x[:, ci, : len(m)]
    return out


@dataclass(frozen=True)
class GraphBundle:
    """Everything an encoder needs: node graph, plan, and component graph."""

    nodes: AcGraph
    plan: CollationPlan
    components: AcGraph = field(default=None)


def face_graphs(layout, template, temporal_window=DEFAULT_TEMPORAL_WINDOW):
    partition = ComponentPartition.from_components(layout.components, layout.landmark_count)
    return GraphBundle(
        build_face_landmark_graph(template, partition, temporal_window),
        CollationPlan.from_partition(partition),
        build_face_anatomy_graph(partition, temporal_window),
    )


def pose_graphs(layout, temporal_window=DEFAULT_TEMPORAL_WINDOW):
    partition = ComponentPartition.from_components(layout.components, layout.skeleton.bone_count)
    if partition.component_count != 3:
        raise ValueError("pose layouts need exactly three components (torso, left arm, right arm)")
    return GraphBundle(
        build_pose_graph(layout.skeleton, partition, temporal_window),
        CollationPlan.from_partition(partition),
        build_pose_anatomy_graph(temporal_window),
    )
