"""Model and tokenizer registry.

Ids resolve in two namespaces. Names under "builtin:" construct offline
instances: builtin:bytes is a byte-level tokenizer (ids 0..255 plus a BOS
marker at 256) and builtin:gpt2-random is a GPT-2 small architecture over
that byte vocabulary with deterministically seeded random weights, which
keeps the whole pipeline runnable on an air-gapped machine. Any other id
is forwarded to the transformers hub loaders; failures there surface as
ModelLoadFailure instead of a loader stack trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ModelLoadFailure, OutOfMemory

__all__ = [
    "BUILTIN_MODEL",
    "BUILTIN_TOKENIZER",
    "ByteTokenizer",
    "HubTokenizer",
    "ModelBundle",
    "load_model",
    "load_tokenizer",
]

BUILTIN_TOKENIZER = "builtin:bytes"
BUILTIN_MODEL = "builtin:gpt2-random"

# fixed init seed; the builtin model must be the same network on every load
_BUILTIN_INIT_SEED = 0


class ByteTokenizer:
    """UTF-8 byte tokenizer: ids 0..255 are byte values, 256 is BOS."""

    name = BUILTIN_TOKENIZER
    vocab_size = 257
    bos_id = 256

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: list[int]) -> str:
        # a span may end mid-codepoint; replace rather than raise
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class HubTokenizer:
    """Thin adapter giving hub tokenizers the same surface as ByteTokenizer."""

    def __init__(self, name: str, tok) -> None:
        self.name = name
        self._tok = tok
        self.vocab_size = len(tok)
        self.bos_id = tok.bos_token_id

    def encode(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)

    def decode(self, ids: list[int]) -> str:
        return self._tok.decode(ids)


def load_tokenizer(tokenizer_id: str):
    """Resolve a tokenizer id to an encode/decode instance."""
    if tokenizer_id == BUILTIN_TOKENIZER:
        return ByteTokenizer()
    if tokenizer_id.startswith("builtin:"):
        raise ModelLoadFailure(f"unknown builtin tokenizer {tokenizer_id!r}")
    try:
        from transformers import AutoTokenizer

        return HubTokenizer(tokenizer_id, AutoTokenizer.from_pretrained(tokenizer_id))
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load tokenizer {tokenizer_id!r}: {exc}") from exc


@dataclass
class ModelBundle:
    """A loaded causal LM plus the pieces needed to score token rows."""

    model_id: str
    tokenizer: object
    model: object
    bos_id: int
    vocab_size: int
    max_positions: int | None

    def score_rows(self, rows: list[list[int]], batch_size: int = 8) -> np.ndarray:
        """Next-token log-probabilities for same-length id rows.

        Entry [i, j] of the returned (len(rows), T-1) array is
        log q(rows[i][j+1] | rows[i][:j+1]) in natural-log units.
        """
        if not rows:
            return np.zeros((0, 0))
        T = len(rows[0])
        if any(len(r) != T for r in rows):
            raise ValueError("score_rows requires rows of equal length")
        if self.max_positions is not None and T > self.max_positions:
            raise ValueError(f"rows of length {T} exceed the model's {self.max_positions} positions")
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        out = []
        for lo in range(0, len(rows), batch_size):
            chunk = rows[lo : lo + batch_size]
            ids = torch.tensor(chunk, dtype=torch.long)
            try:
                with torch.no_grad():
                    logits = self.model(ids).logits
            except RuntimeError as exc:
                if "memory" in str(exc).lower():
                    raise OutOfMemory(
                        f"batch of {len(chunk)} rows x {T} positions does not fit; "
                        f"retry with a smaller batch size"
                    ) from exc
                raise
            logp = torch.log_softmax(logits[:, :-1, :].float(), dim=-1)
            picked = torch.gather(logp, -1, ids[:, 1:, None]).squeeze(-1)
            out.append(picked.numpy().astype(np.float64))
        return np.concatenate(out, axis=0)

    def distribution(self, prefix_ids: list[int]) -> np.ndarray:
        """Full next-token log-prob vector after a prefix (natural log)."""
        ids = torch.tensor([prefix_ids], dtype=torch.long)
        with torch.no_grad():
            logits = self.model(ids).logits
        return torch.log_softmax(logits[0, -1].float(), dim=-1).numpy().astype(np.float64)


def _build_random_gpt2() -> ModelBundle:
    from transformers import GPT2Config, GPT2LMHeadModel

    tok = ByteTokenizer()
    cfg = GPT2Config(
        vocab_size=tok.vocab_size,
        n_positions=512,
        n_embd=768,
        n_layer=12,
        n_head=12,
        bos_token_id=tok.bos_id,
        eos_token_id=tok.bos_id,
    )
    torch.manual_seed(_BUILTIN_INIT_SEED)
    model = GPT2LMHeadModel(cfg).eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return ModelBundle(
        model_id=BUILTIN_MODEL,
        tokenizer=tok,
        model=model,
        bos_id=tok.bos_id,
        vocab_size=tok.vocab_size,
        max_positions=cfg.n_positions,
    )


def load_model(model_id: str) -> ModelBundle:
    """Resolve a model id to a scoring-ready bundle."""
    if model_id == BUILTIN_MODEL:
        return _build_random_gpt2()
    if model_id.startswith("builtin:"):
        raise ModelLoadFailure(f"unknown builtin model {model_id!r}")
    try:
        from transformers import AutoModelForCausalLM, AutoTokenizer

        tok = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id).eval()
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load model {model_id!r}: {exc}") from exc
    bos = tok.bos_token_id
    if bos is None:
        bos = getattr(model.config, "bos_token_id", None)
    if bos is None:
        raise ModelLoadFailure(f"model {model_id!r} declares no BOS token")
    return ModelBundle(
        model_id=model_id,
        tokenizer=HubTokenizer(model_id, tok),
        model=model,
        bos_id=int(bos),
        vocab_size=int(model.config.vocab_size),
        max_positions=getattr(model.config, "max_position_embeddings", None),
    )
