"""Paired local-feature corpora: synthetic generation and the on-disk format.

On disk a corpus is a JSON manifest plus a little-endian binary blob. The
blob starts with the magic bytes ``DIAS`` and a u32 version (1), followed
by float32 row-major local matrices at the byte offsets listed in the
manifest.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DIAS"
VERSION = 1
HEADER_SIZE = 8
TEXTS_PER_IMAGE = 5


class CorpusFormatError(ValueError):
    pass


@dataclass
class Corpus:
    """Images with their local region features and matched captions.

    ``text_ids[i]`` lists the text indices matched to image i; every text
    belongs to exactly one image (``text_image[t]``).
    """

    images: list[np.ndarray]
    texts: list[np.ndarray]
    text_ids: list[list[int]]

    def __post_init__(self):
        if not self.images or not self.texts:
            raise ValueError("corpus needs at least one image and one text")
        di = {a.shape[1] for a in self.images}
        dt = {a.shape[1] for a in self.texts}
        if len(di) != 1 or len(dt) != 1:
            raise ValueError("all instances of a modality must share the feature dimension")
        if any(a.shape[0] < 1 for a in self.images + self.texts):
            raise ValueError("every instance needs at least one local vector")
        owner = np.full(len(self.texts), -1)
        for i, ids in enumerate(self.text_ids):
            for t in ids:
                if owner[t] != -1:
                    raise ValueError(f"text {t} is matched to more than one image")
                owner[t] = i
        self.text_image = owner

    @property
    def num_images(self) -> int:
        return len(self.images)

    @property
    def d_in_image(self) -> int:
        return self.images[0].shape[1]

    @property
    def d_in_text(self) -> int:
        return self.texts[0].shape[1]

    def subset(self, image_idx) -> Corpus:
        """Corpus restricted to the given images and their texts, reindexed."""
        images, texts, text_ids = [], [], []
        for i in image_idx:
            images.append(self.images[i])
            ids = []
            for t in self.text_ids[i]:
                ids.append(len(texts))
                texts.append(self.texts[t])
            text_ids.append(ids)
        return Corpus(images, texts, text_ids)


@dataclass
class SynthSpec:
    num_pairs: int = 1000
    latent_dim: int = 16
    d_in_image: int = 32
    d_in_text: int = 32
    regions_range: tuple[int, int] = (3, 6)
    words_range: tuple[int, int] = (3, 6)
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.regions_range = tuple(self.regions_range)
        self.words_range = tuple(self.words_range)
        if min(self.regions_range[0], self.words_range[0]) < 1:
            raise ValueError("region/word counts must be at least 1")
        if self.regions_range[0] > self.regions_range[1] or self.words_range[0] > self.words_range[1]:
            raise ValueError("ranges must be [min, max] with min <= max")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass
class SynthCorpus:
    corpus: Corpus
    latents: np.ndarray         # (num_pairs, latent_dim)
    map_image: np.ndarray       # (d_in_image, latent_dim)
    map_text: np.ndarray        # (d_in_text, latent_dim)
    spec: SynthSpec = field(default_factory=SynthSpec)


def gen_synth(spec: SynthSpec) -> SynthCorpus:
    """Shared-latent corpus: every local of pair i is a fixed linear image of latent u_i plus noise."""
    rng = np.random.default_rng(spec.seed)
    k = spec.latent_dim
    map_image = rng.normal(0.0, 1.0 / np.sqrt(k), (spec.d_in_image, k))
    map_text = rng.normal(0.0, 1.0 / np.sqrt(k), (spec.d_in_text, k))
    latents = rng.normal(size=(spec.num_pairs, k))
    images, texts, text_ids = [], [], []
    for u in latents:
        n_v = int(rng.integers(spec.regions_range[0], spec.regions_range[1] + 1))
        img = map_image @ u + spec.noise_sigma * rng.normal(size=(n_v, spec.d_in_image))
        images.append(img)
        ids = []
        for _ in range(TEXTS_PER_IMAGE):
            n_t = int(rng.integers(spec.words_range[0], spec.words_range[1] + 1))
            txt = map_text @ u + spec.noise_sigma * rng.normal(size=(n_t, spec.d_in_text))
            ids.append(len(texts))
            texts.append(txt)
        text_ids.append(ids)
    return SynthCorpus(Corpus(images, texts, text_ids), latents, map_image, map_text, spec)


def decode_latents(synth: SynthCorpus, modality: str = "image") -> list[np.ndarray]:
    """Least-squares latent estimate for every local vector (pseudo-inverse of the map)."""
    if modality == "image":
        pinv, mats = np.linalg.pinv(synth.map_image), synth.corpus.images
    else:
        pinv, mats = np.linalg.pinv(synth.map_text), synth.corpus.texts
    return [m @ pinv.T for m in mats]


def separation(synth: SynthCorpus) -> tuple[float, float]:
    """Mean cosine of matched and of unmatched (image, text) pairs in decoded latent space."""
    unit = lambda x: x / np.linalg.norm(x, axis=1, keepdims=True)
    img = unit(np.stack([m.mean(0) for m in decode_latents(synth, "image")]))
    txt = unit(np.stack([m.mean(0) for m in decode_latents(synth, "text")]))
    cos = img @ txt.T
    matched = np.zeros(cos.shape, dtype=bool)
    matched[synth.corpus.text_image, np.arange(cos.shape[1])] = True
    return float(cos[matched].mean()), float(cos[~matched].mean())


def write_corpus(corpus: Corpus, out_dir, name: str = "corpus") -> Path:
    """Write ``<name>.bin`` and ``<name>.json`` under out_dir; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blob_path = out / f"{name}.bin"
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    offset = HEADER_SIZE

    def put(a: np.ndarray) -> int:
        nonlocal offset
        data = np.ascontiguousarray(a, dtype="<f4").tobytes()
        start = offset
        chunks.append(data)
        offset += len(data)
        return start

    instances = []
    for i, img in enumerate(corpus.images):
        instances.append({"id": i, "image_count": int(img.shape[0]), "offset": put(img),
                          "text_ids": [int(t) for t in corpus.text_ids[i]]})
    texts = [{"id": t, "word_count": int(a.shape[0]), "offset": put(a)}
             for t, a in enumerate(corpus.texts)]
    blob_path.write_bytes(b"".join(chunks))
    manifest = {
        "version": VERSION,
        "blob": blob_path.name,
        "blob_size": offset,
        "d_in_image": corpus.d_in_image,
        "d_in_text": corpus.d_in_text,
        "instances": instances,
        "texts": texts,
    }
    manifest_path = out / f"{name}.json"
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest_path


def read_corpus(manifest_path) -> Corpus:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("version") != VERSION:
        raise CorpusFormatError(f"unsupported manifest version {manifest.get('version')!r}")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise CorpusFormatError(f"blob truncated at byte {len(blob)}: header needs {HEADER_SIZE} bytes")
    if blob[:4] != MAGIC:
        raise CorpusFormatError(f"bad magic {blob[:4]!r} at byte 0")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CorpusFormatError(f"unsupported blob version {version} at byte 4")

    d_img, d_txt = int(manifest["d_in_image"]), int(manifest["d_in_text"])
    spans = []

    def take(offset: int, rows: int, cols: int, what: str) -> np.ndarray:
        size = rows * cols * 4
        if rows < 1:
            raise CorpusFormatError(f"{what} has no local vectors")
        if offset < HEADER_SIZE or offset + size > len(blob):
            raise CorpusFormatError(
                f"{what} spans bytes {offset}..{offset + size} outside blob of {len(blob)} bytes")
        spans.append((offset, offset + size, what))
        return np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols).astype(np.float32)

    images = [take(int(r["offset"]), int(r["image_count"]), d_img, f"image {r['id']}")
              for r in manifest["instances"]]
    texts = [take(int(r["offset"]), int(r["word_count"]), d_txt, f"text {r['id']}")
             for r in manifest["texts"]]

    spans.sort()
    for (s0, e0, w0), (s1, _, w1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise CorpusFormatError(f"{w1} at byte {s1} overlaps {w0} ending at byte {e0}")
        if s1 > e0:
            raise CorpusFormatError(f"blob extent mismatch: bytes {e0}..{s1} are not covered by the manifest")
    end = spans[-1][1] if spans else HEADER_SIZE
    expected = manifest.get("blob_size", end)
    if len(blob) != expected or end != len(blob):
        raise CorpusFormatError(
            f"blob extent mismatch: manifest data ends at byte {end}, blob has {len(blob)} bytes")
    text_ids = [[int(t) for t in r["text_ids"]] for r in manifest["instances"]]
    for ids in text_ids:
        for t in ids:
            if not 0 <= t < len(texts):
                raise CorpusFormatError(f"text id {t} not present in manifest")
    return Corpus(images, texts, text_ids)
