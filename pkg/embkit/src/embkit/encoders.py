"""Encoder backends that turn sentences into per-token hidden states.

Both backends expose the same surface: ``name``, ``dim``, ``max_layer``
(layer 0 is the embedding layer) and ``batch_states``, which returns one
(special_token_mask, {layer: states}) pair per sentence with padding
already removed. Pooling into sentence vectors happens in extract.py so
every backend shares one code path.
"""
import hashlib

import numpy as np

from .errors import LayerRangeError, ModelLoadError


class HashEncoder:
    """Deterministic offline encoder for tests, dry runs, and plumbing work.

    Each distinct token gets a fixed unit vector seeded by a digest of its
    text; layer L contextualizes position i as the mean of the layer-0
    vectors in a +-L window, renormalized. Needs no weights or network and
    is exactly batch-invariant, so it exercises the full extraction path
    with none of the model-loading cost.
    """

    BOS = "<s>"
    EOS = "</s>"

    def __init__(self, dim: int = 64, max_layer: int = 4):
        if dim < 1:
            raise ModelLoadError(f"hash encoder dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.max_layer = int(max_layer)
        self.name = f"hash-{self.dim}"
        self._cache: dict[str, np.ndarray] = {}

    def tokenize(self, text: str) -> list[str]:
        tokens = []
        for raw in text.lower().split():
            cleaned = "".join(c for c in raw if c.isalnum())
            tokens.append(cleaned or raw)
        return tokens

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            seed = int.from_bytes(
                hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(),
                "little",
            )
            vec = np.random.default_rng(seed).normal(size=self.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def sentence_states(self, text: str, layer: int) -> tuple[np.ndarray, np.ndarray]:
        """(special_mask, states) for one sentence at one layer."""
        tokens = [self.BOS, *self.tokenize(text), self.EOS]
        base = np.stack([self._token_vector(t) for t in tokens])
        if layer == 0:
            states = base
        else:
            states = np.empty_like(base)
            for i in range(len(tokens)):
                window = base[max(0, i - layer) : i + layer + 1]
                states[i] = window.mean(axis=0)
            norms = np.linalg.norm(states, axis=1, keepdims=True)
            states = states / norms
        special = np.zeros(len(tokens), dtype=bool)
        special[0] = True
        special[-1] = True
        return special, states

    def batch_states(self, sentences, layers):
        out = []
        for text in sentences:
            per_layer = {}
            special = None
            for layer in layers:
                special, states = self.sentence_states(text, layer)
                per_layer[layer] = states
            out.append((special, per_layer))
        return out


class HFEncoder:
    """Transformers-backed encoder; weights load lazily at construction."""

    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"transformers backend unavailable: {exc}") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_name)
            self._model = AutoModel.from_pretrained(model_name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {model_name!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self._model.to(device)
        self._model.eval()
        self.name = model_name
        self.dim = int(self._model.config.hidden_size)
        self.max_layer = int(self._model.config.num_hidden_layers)

    def batch_states(self, sentences, layers):
        enc = self._tokenizer(
            list(sentences),
            return_tensors="pt",
            padding=True,
            truncation=True,
            return_special_tokens_mask=True,
        )
        special_mask = enc.pop("special_tokens_mask")
        enc = {k: v.to(self._device) for k, v in enc.items()}
        with self._torch.no_grad():
            hidden = self._model(**enc, output_hidden_states=True).hidden_states
        lengths = enc["attention_mask"].sum(dim=1).tolist()
        out = []
        for i, length in enumerate(lengths):
            length = int(length)
            per_layer = {
                layer: hidden[layer][i, :length].cpu().numpy().astype(np.float64)
                for layer in layers
            }
            special = special_mask[i, :length].numpy().astype(bool)
            out.append((special, per_layer))
        return out


def parse_model_spec(spec: str):
    """``hash`` or ``hash:<dim>`` build the offline encoder; anything else
    is treated as a transformers model name."""
    if spec == "hash" or spec.startswith("hash:"):
        if ":" in spec:
            raw = spec.split(":", 1)[1]
            try:
                dim = int(raw)
            except ValueError:
                raise ModelLoadError(f"bad hash encoder dim {raw!r}") from None
            return HashEncoder(dim=dim)
        return HashEncoder()
    return HFEncoder(spec)


def check_layers(encoder, layers) -> list[int]:
    layers = [int(l) for l in layers]
    for layer in layers:
        if not 0 <= layer <= encoder.max_layer:
            raise LayerRangeError(
                f"layer {layer} out of range, model {encoder.name} has layers "
                f"0..{encoder.max_layer}"
            )
    return layers
