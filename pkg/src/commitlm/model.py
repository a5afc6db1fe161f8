"""A small pre-LN encoder-decoder Transformer with segment embeddings, plus its losses and decoders."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DropoutDisabled, PositionOverflow, ZeroVector
from .sequence import NUM_SEGMENTS, Segment, SegmentedSequence, next_segment
from .vocab import CLS, EOS, PAD


@dataclass
class ModelConfig:
    vocab_size: int
    layers_enc: int = 2
    layers_dec: int = 2
    dim: int = 64
    heads: int = 4
    ffn_mult: int = 4
    max_positions: int = 512
    dropout_rate: float = 0.1
    tau: float = 0.05

    def __post_init__(self):
        if min(self.vocab_size, self.layers_enc, self.layers_dec, self.dim, self.heads, self.ffn_mult,
               self.max_positions) < 1:
            raise ConfigError("model sizes must be positive")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")

    @classmethod
    def full_scale(cls, vocab_size: int) -> "ModelConfig":
        return cls(vocab_size, layers_enc=6, layers_dec=6, dim=768, heads=12)

    def to_dict(self) -> dict:
        return asdict(self)


def dropout(x: torch.Tensor, p: float, gen: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout drawing its mask from ``gen`` (an explicit RNG)."""
    if p == 0.0 or gen is None:
        return x
    keep = torch.rand(x.shape, generator=gen, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, mem: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # mask: broadcastable to (B, 1, Lq, Lk), True where attention is allowed
        B, Lq, D = x.shape
        Lk = mem.shape[1]
        h, dh = self.heads, D // self.heads
        q = self.q(x).view(B, Lq, h, dh).transpose(1, 2)
        k = self.k(mem).view(B, Lk, h, dh).transpose(1, 2)
        v = self.v(mem).view(B, Lk, h, dh).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(dh)
        scores = scores.masked_fill(~mask, float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.o(out.transpose(1, 2).reshape(B, Lq, D))


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: int):
        super().__init__()
        self.up = nn.Linear(dim, dim * mult)
        self.down = nn.Linear(dim * mult, dim)

    def forward(self, x):
        return self.down(F.gelu(self.up(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.dim)
        self.attn = Attention(cfg.dim, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.dim)
        self.ffn = FeedForward(cfg.dim, cfg.ffn_mult)
        self.p = cfg.dropout_rate

    def forward(self, x, mask, gen):
        y = self.norm1(x)
        x = x + dropout(self.attn(y, y, mask), self.p, gen)
        return x + dropout(self.ffn(self.norm2(x)), self.p, gen)


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.dim)
        self.self_attn = Attention(cfg.dim, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.dim)
        self.cross_attn = Attention(cfg.dim, cfg.heads)
        self.norm3 = nn.LayerNorm(cfg.dim)
        self.ffn = FeedForward(cfg.dim, cfg.ffn_mult)
        self.p = cfg.dropout_rate

    def forward(self, x, mem, self_mask, cross_mask, gen):
        y = self.norm1(x)
        x = x + dropout(self.self_attn(y, y, self_mask), self.p, gen)
        x = x + dropout(self.cross_attn(self.norm2(x), mem, cross_mask), self.p, gen)
        return x + dropout(self.ffn(self.norm3(x)), self.p, gen)


class CommitTransformer(nn.Module):
    """Encoder-decoder whose input rows are token + segment + position embeddings.

    The output projection is tied to the token embedding. Passing a
    ``torch.Generator`` as ``gen`` switches dropout on (train mode);
    ``gen=None`` is a deterministic eval pass.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.dim)
        self.seg_emb = nn.Embedding(NUM_SEGMENTS, cfg.dim)
        self.pos_emb = nn.Embedding(cfg.max_positions, cfg.dim)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers_enc))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.layers_dec))
        self.enc_norm = nn.LayerNorm(cfg.dim)
        self.dec_norm = nn.LayerNorm(cfg.dim)
        self.out_bias = nn.Parameter(torch.zeros(cfg.vocab_size))

    def embed(self, tokens: torch.Tensor, segments: torch.Tensor) -> torch.Tensor:
        L = tokens.shape[-1]
        if L > self.cfg.max_positions:
            raise PositionOverflow(f"length {L} exceeds max_positions {self.cfg.max_positions}")
        pos = torch.arange(L)
        return self.tok_emb(tokens) + self.seg_emb(segments) + self.pos_emb(pos)

    def encode(self, tokens, segments, gen=None):
        pad = tokens != PAD
        mask = pad[:, None, None, :]
        x = dropout(self.embed(tokens, segments), self.cfg.dropout_rate, gen)
        for layer in self.encoder:
            x = layer(x, mask, gen)
        return self.enc_norm(x), mask

    def decode(self, tokens, segments, memory, cross_mask, gen=None):
        L = tokens.shape[1]
        causal = torch.ones(L, L, dtype=torch.bool).tril()
        self_mask = causal[None, None] & (tokens != PAD)[:, None, None, :]
        x = dropout(self.embed(tokens, segments), self.cfg.dropout_rate, gen)
        for layer in self.decoder:
            x = layer(x, memory, self_mask, cross_mask, gen)
        return self.dec_norm(x) @ self.tok_emb.weight.T + self.out_bias

    def forward(self, src_tok, src_seg, tgt_tok, tgt_seg, gen=None):
        memory, cross_mask = self.encode(src_tok, src_seg, gen)
        return self.decode(tgt_tok, tgt_seg, memory, cross_mask, gen)


def init_params(cfg: ModelConfig, seed: int) -> CommitTransformer:
    """Fresh model: weights ~ N(0, 0.02), biases zero, LayerNorm gains one."""
    model = CommitTransformer(cfg)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias") or name == "out_bias":
                p.zero_()
            elif "norm" in name:
                p.fill_(1.0)
            else:
                p.copy_(torch.randn(p.shape, generator=gen) * 0.02)
    return model


# ---------------------------------------------------------------------------
# batching

def collate(seqs: Sequence[SegmentedSequence]) -> tuple[torch.Tensor, torch.Tensor]:
    L = max(len(s) for s in seqs)
    tok = torch.full((len(seqs), L), PAD, dtype=torch.long)
    seg = torch.full((len(seqs), L), int(Segment.CTX), dtype=torch.long)
    for i, s in enumerate(seqs):
        tok[i, : len(s)] = torch.tensor(s.token_ids, dtype=torch.long)
        seg[i, : len(s)] = torch.tensor(s.segment_ids, dtype=torch.long)
    return tok, seg


def forward_seq2seq(model: CommitTransformer, sources: Sequence[SegmentedSequence],
                    target_prefixes: Sequence[SegmentedSequence], gen: torch.Generator | None = None) -> torch.Tensor:
    """Logits of shape (batch, prefix length, vocab)."""
    src_tok, src_seg = collate(sources)
    tgt_tok, tgt_seg = collate(target_prefixes)
    return model(src_tok, src_seg, tgt_tok, tgt_seg, gen)


# ---------------------------------------------------------------------------
# losses

def token_nll(logits: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of ``gold`` over non-PAD positions."""
    logp = F.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    keep = gold != PAD
    return nll[keep].mean()


def loss_seq2seq(model: CommitTransformer, sources: Sequence[SegmentedSequence],
                 targets: Sequence[SegmentedSequence], gen: torch.Generator | None = None) -> torch.Tensor:
    """Teacher-forced cross-entropy: predict ``target[1:]`` from ``target[:-1]`` and the source."""
    src_tok, src_seg = collate(sources)
    tgt_tok, tgt_seg = collate(targets)
    logits = model(src_tok, src_seg, tgt_tok[:, :-1], tgt_seg[:, :-1], gen)
    return token_nll(logits, tgt_tok[:, 1:])


def pooled_representation(model: CommitTransformer, sources: Sequence[SegmentedSequence],
                          gen: torch.Generator | None = None) -> torch.Tensor:
    """Encoder output at the leading [CLS] position, shape (batch, dim)."""
    tok, seg = collate(sources)
    if (tok[:, 0] != CLS).any():
        raise ValueError("pooled sources must start with [CLS]")
    memory, _ = model.encode(tok, seg, gen)
    return memory[:, 0]


def contrastive_loss(reps: torch.Tensor, pos_reps: torch.Tensor, tau: float) -> torch.Tensor:
    """In-batch InfoNCE over cosine similarities.

    Row ``i`` scores ``reps[i]`` against every positive view ``pos_reps[j]``;
    the matching ``j = i`` is the correct class.
    """
    if reps.shape != pos_reps.shape or reps.ndim != 2:
        raise ValueError("reps and pos_reps must both be (batch, dim)")
    na = reps.norm(dim=-1)
    nb = pos_reps.norm(dim=-1)
    if bool((na == 0).any()) or bool((nb == 0).any()):
        raise ZeroVector("contrastive inputs must be non-zero vectors")
    sim = (reps / na[:, None]) @ (pos_reps / nb[:, None]).T / tau
    labels = torch.arange(reps.shape[0])
    return F.cross_entropy(sim, labels)


def simcse_pair(model: CommitTransformer, sources: Sequence[SegmentedSequence], gen: torch.Generator
                ) -> tuple[torch.Tensor, torch.Tensor]:
    """Two train-mode encodings of the same inputs under independent dropout masks."""
    if model.cfg.dropout_rate == 0:
        raise DropoutDisabled("SimCSE needs dropout_rate > 0")
    return pooled_representation(model, sources, gen), pooled_representation(model, sources, gen)


# ---------------------------------------------------------------------------
# decoding

@torch.no_grad()
def greedy_decode(model: CommitTransformer, sources: Sequence[SegmentedSequence], max_len: int,
                  initial_segment: int = Segment.CTX) -> list[list[int]]:
    """Argmax decoding from [CLS]; returns generated ids without [CLS]/[EOS].

    ``torch.argmax`` returns the first maximum, so ties go to the lowest id.
    """
    src_tok, src_seg = collate(sources)
    memory, cross_mask = model.encode(src_tok, src_seg)
    B = len(sources)
    tok = torch.full((B, 1), CLS, dtype=torch.long)
    seg = torch.full((B, 1), int(initial_segment), dtype=torch.long)
    state = [next_segment(CLS, int(initial_segment))[1]] * B
    outputs: list[list[int]] = [[] for _ in range(B)]
    done = [False] * B
    limit = min(max_len, model.cfg.max_positions - 1)
    for _ in range(limit):
        logits = model.decode(tok, seg, memory, cross_mask)[:, -1]
        nxt = logits.argmax(dim=-1).tolist()
        new_segs = []
        for b, t in enumerate(nxt):
            s, state[b] = next_segment(t, state[b])
            new_segs.append(s)
            if done[b]:
                continue
            if t == EOS:
                done[b] = True
            else:
                outputs[b].append(t)
        if all(done):
            break
        tok = torch.cat([tok, torch.tensor(nxt)[:, None]], dim=1)
        seg = torch.cat([seg, torch.tensor(new_segs)[:, None]], dim=1)
    return outputs


@dataclass
class _Beam:
    score: float
    ids: list[int]
    segs: list[int]
    state: int


@torch.no_grad()
def beam_decode(model: CommitTransformer, source: SegmentedSequence, max_len: int, width: int,
                initial_segment: int = Segment.CTX) -> list[int]:
    """Beam search over summed log-probabilities.

    Finished hypotheses are ranked by log-probability per generated token
    (EOS included). Ties prefer the lower token id, so ``width=1``
    reproduces ``greedy_decode``.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    src_tok, src_seg = collate([source])
    memory, cross_mask = model.encode(src_tok, src_seg)
    beams = [_Beam(0.0, [CLS], [int(initial_segment)], next_segment(CLS, int(initial_segment))[1])]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(min(max_len, model.cfg.max_positions - 1)):
        tok = torch.tensor([b.ids for b in beams])
        seg = torch.tensor([b.segs for b in beams])
        n = len(beams)
        logits = model.decode(tok, seg, memory.expand(n, -1, -1), cross_mask.expand(n, -1, -1, -1))[:, -1]
        logp = F.log_softmax(logits, dim=-1)
        cands = []
        for bi, beam in enumerate(beams):
            vals, idx = torch.sort(logp[bi], descending=True, stable=True)
            for lp, t in zip(vals[:width].tolist(), idx[:width].tolist()):
                cands.append((beam.score + lp, t, bi))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        live: list[_Beam] = []
        for score, t, bi in cands:
            beam = beams[bi]
            if t == EOS:
                finished.append((score / len(beam.ids), beam.ids[1:]))
            else:
                seg_t, state = next_segment(t, beam.state)
                live.append(_Beam(score, beam.ids + [t], beam.segs + [seg_t], state))
            if len(live) == width:
                break
        beams = live
        if not beams or len(finished) >= width:
            break
    if not finished:
        finished = [(b.score / max(len(b.ids) - 1, 1), b.ids[1:]) for b in beams]
    return max(finished, key=lambda f: f[0])[1]
