"""Encoder network and metric-learning losses."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class SmallEncoder(nn.Module):
    """Three conv blocks, global average pooling, linear projection.

    GAP makes the encoder input-size agnostic, so one trained model embeds
    every resolution of the ladder into the same space.
    """

    def __init__(self, embedding_dim: int = 128):
        super().__init__()
        def block(cin, cout):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 3, padding=1),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2),
            )
        self.features = nn.Sequential(block(3, 32), block(32, 64), block(64, 128))
        self.head = nn.Linear(128, embedding_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        h = F.adaptive_avg_pool2d(h, 1).flatten(1)
        z = self.head(h)
        return F.normalize(z, dim=1)


def triplet_loss(embeddings: torch.Tensor, labels: torch.Tensor,
                 margin: float) -> torch.Tensor:
    """Batch-hard triplet loss on cosine distance (1 - cos)."""
    dist = 1.0 - embeddings @ embeddings.T
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=labels.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    valid = pos_mask.any(dim=1) & neg_mask.any(dim=1)
    if not valid.any():
        return embeddings.sum() * 0.0
    hardest_pos = torch.where(pos_mask, dist, torch.full_like(dist, -1.0)).max(dim=1).values
    hardest_neg = torch.where(neg_mask, dist, torch.full_like(dist, 2.0)).min(dim=1).values
    losses = F.relu(hardest_pos - hardest_neg + margin)
    return losses[valid].mean()


def contrastive_loss(embeddings: torch.Tensor, labels: torch.Tensor,
                     margin: float) -> torch.Tensor:
    """All-pairs contrastive loss: pull same-class, push others past margin."""
    dist = 1.0 - embeddings @ embeddings.T
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=labels.device)
    iu = torch.triu_indices(len(labels), len(labels), offset=1)
    pair_dist = dist[iu[0], iu[1]]
    pair_same = same[iu[0], iu[1]]
    pos = pair_dist[pair_same]
    neg = F.relu(margin - pair_dist[~pair_same])
    terms = []
    if pos.numel():
        terms.append(pos.mean())
    if neg.numel():
        terms.append(neg.mean())
    if not terms:
        return embeddings.sum() * 0.0
    return torch.stack(terms).sum()
