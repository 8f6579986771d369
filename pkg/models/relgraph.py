"""
Multi-semantic relation graph over {question, answers, snippets} and the
relational graph convolution that turns it into per-answer interaction features.

Node order is [q, a_1..a_|A|, c_1..c_|C|]. Three binary undirected relations:
  rel: question <-> every answer and snippet
  sim: answer <-> answer, snippet <-> snippet
  ent: answer <-> snippet
"""

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import torch
import torch.nn as nn

from core.config import RELATIONS

FeatureRows = Union[torch.Tensor, Sequence[torch.Tensor]]


def _as_matrix(rows: FeatureRows, dim: int, like: torch.Tensor) -> torch.Tensor:
    if isinstance(rows, torch.Tensor):
        matrix = rows if rows.dim() == 2 else rows.reshape(-1, dim)
    elif len(rows) == 0:
        matrix = like.new_zeros((0, dim))
    else:
        matrix = torch.stack(list(rows))
    if matrix.shape[0] and matrix.shape[1] != dim:
        raise ValueError(f"feature dimension mismatch: expected {dim}, found {matrix.shape[1]}")
    return matrix


def normalize_adjacency(adjacency: torch.Tensor) -> torch.Tensor:
    """D^-1/2 A D^-1/2, with D^-1/2 set to 0 for nodes without neighbours."""
    if adjacency.dim() != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {tuple(adjacency.shape)}")
    if not torch.equal(adjacency, adjacency.transpose(0, 1)):
        raise ValueError("adjacency must be symmetric")
    degree = adjacency.sum(dim=1)
    inv_sqrt = torch.where(degree > 0, degree.clamp_min(1.0).rsqrt(), torch.zeros_like(degree))
    return inv_sqrt.unsqueeze(1) * adjacency * inv_sqrt.unsqueeze(0)


@dataclass
class SemanticGraph:
    """Node features H^(0) plus the binary and normalized adjacency of each relation"""

    num_answers: int
    num_snippets: int
    features: torch.Tensor
    adjacency: dict = field(default_factory=dict)
    normalized: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return 1 + self.num_answers + self.num_snippets

    @property
    def node_order(self) -> list[str]:
        return (["q"] + [f"a{i + 1}" for i in range(self.num_answers)]
                + [f"c{i + 1}" for i in range(self.num_snippets)])

    @property
    def answer_slice(self) -> slice:
        return slice(1, 1 + self.num_answers)

    def without(self, relation: str) -> "SemanticGraph":
        """Copy of the graph with one relation's edges removed."""
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation '{relation}'")
        adjacency = dict(self.adjacency)
        normalized = dict(self.normalized)
        adjacency[relation] = torch.zeros_like(adjacency[relation])
        normalized[relation] = normalize_adjacency(adjacency[relation])
        return replace(self, adjacency=adjacency, normalized=normalized)

    def dump(self) -> str:
        """Adjacency matrices as 0/1 text grids, one block per relation."""
        blocks = []
        for relation in RELATIONS:
            lines = [f"# {relation} ({' '.join(self.node_order)})"]
            for row in self.adjacency[relation].tolist():
                lines.append(" ".join(str(int(v)) for v in row))
            blocks.append("\n".join(lines))
        return "\n".join(blocks)


def build_graph(x_q: torch.Tensor, answer_features: FeatureRows, snippet_features: FeatureRows,
                relations: Iterable[str] = RELATIONS) -> SemanticGraph:
    """
    Build the relation graph for one question

    Args:
        x_q: Question vector (d)
        answer_features: Answer vectors (|A| x d), at least one
        snippet_features: Snippet vectors (|C| x d), possibly none
        relations: Relations to keep; the others get an all-zero adjacency

    Returns:
        SemanticGraph with features in node order
    """
    dim = x_q.shape[-1]
    answers = _as_matrix(answer_features, dim, x_q)
    snippets = _as_matrix(snippet_features, dim, x_q)
    n_a, n_c = answers.shape[0], snippets.shape[0]
    if n_a < 1:
        raise ValueError("a graph needs at least one answer node")
    features = torch.cat([x_q.reshape(1, dim), answers, snippets], dim=0)

    n = 1 + n_a + n_c
    a_nodes = slice(1, 1 + n_a)
    c_nodes = slice(1 + n_a, n)
    zeros = x_q.new_zeros((n, n))

    rel = zeros.clone()
    rel[0, 1:] = 1.0
    rel[1:, 0] = 1.0

    sim = zeros.clone()
    sim[a_nodes, a_nodes] = 1.0
    sim[c_nodes, c_nodes] = 1.0
    sim.fill_diagonal_(0.0)

    ent = zeros.clone()
    ent[a_nodes, c_nodes] = 1.0
    ent[c_nodes, a_nodes] = 1.0

    keep = set(relations)
    adjacency = {}
    for name, matrix in (("rel", rel), ("sim", sim), ("ent", ent)):
        adjacency[name] = matrix if name in keep else zeros.clone()
    normalized = {name: normalize_adjacency(matrix) for name, matrix in adjacency.items()}
    return SemanticGraph(n_a, n_c, features, adjacency, normalized)


class RelationalGraphLayer(nn.Module):
    """One relational convolution: ReLU(sum_r Lambda^r H W_r + H W_s), no bias"""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.relation_weights = nn.ModuleDict(
            {name: nn.Linear(in_dim, out_dim, bias=False) for name in RELATIONS}
        )
        self.self_weight = nn.Linear(in_dim, out_dim, bias=False)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for linear in list(self.relation_weights.values()) + [self.self_weight]:
            nn.init.xavier_uniform_(linear.weight)

    def forward(self, hidden: torch.Tensor, graph: SemanticGraph) -> torch.Tensor:
        if hidden.dim() != 2 or hidden.shape[0] != graph.num_nodes or hidden.shape[1] != self.in_dim:
            raise ValueError(
                f"expected node states of shape ({graph.num_nodes}, {self.in_dim}), "
                f"got {tuple(hidden.shape)}"
            )
        total = self.self_weight(hidden)
        for name in RELATIONS:
            total = total + torch.matmul(graph.normalized[name], self.relation_weights[name](hidden))
        return torch.relu(total)


def rgcn_layer(hidden: torch.Tensor, graph: SemanticGraph, layer: RelationalGraphLayer) -> torch.Tensor:
    return layer(hidden, graph)


class InteractionGCN(nn.Module):
    """Stack of relational graph layers; dims chain from the node feature size"""

    def __init__(self, input_dim: int, layer_dims: Sequence[int]):
        super().__init__()
        dims = [input_dim] + list(layer_dims)
        self.layers = nn.ModuleList(
            RelationalGraphLayer(dims[i], dims[i + 1]) for i in range(len(layer_dims))
        )

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, graph: SemanticGraph) -> torch.Tensor:
        hidden = graph.features
        for layer in self.layers:
            hidden = rgcn_layer(hidden, graph, layer)
        return hidden[graph.answer_slice]


def interaction_features(graph: SemanticGraph, gcn: InteractionGCN) -> torch.Tensor:
    """Last-layer states of the answer nodes (|A| x dim_L)."""
    return gcn(graph)
