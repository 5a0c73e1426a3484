"""Dataset I/O and the synthetic village generator.

On disk a dataset is a manifest (JSON) plus one embedding blob per village.
Scalar and vector facts are stored inline in the manifest; embeddings live in
a small binary format (`HGNNEMB1`) that round-trips bit-exactly.

The synthetic generator stands in for the real survey data: facts come from
seeded distributions, every subtype label follows a deterministic threshold
rule over the facts in its relation set (optionally flipped with a known
noise rate), and embeddings are low-rank signals correlated with the
village's group-level latent. The accompanying oracle report makes the
labelling rules replayable and states the Bayes accuracy per subtype.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .taxonomy import Schema, SCHEMA_VERSION

EMB_MAGIC = b"HGNNEMB1"
STD_FLOOR = 1e-8


class LoadError(ValueError):
    """Dataset on disk is inconsistent with the schema."""


class BlobFormatError(ValueError):
    """Embedding blob is corrupt or not in the expected format."""


@dataclass
class VillageSample:
    village_id: str
    embeddings: dict[str, np.ndarray]  # source id -> (dim,) float32
    facts: dict[str, np.ndarray]       # source id -> (dim,) float64
    labels: dict[str, int]             # subtype key -> class index


@dataclass
class Standardization:
    """Per-fact-source mean/std fitted on the training split only."""

    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]

    def apply(self, facts: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {
            sid: (x - self.mean[sid]) / self.std[sid] if sid in self.mean else x.copy()
            for sid, x in facts.items()
        }


@dataclass
class Dataset:
    samples: list[VillageSample]
    standardization: Standardization | None = None

    def __len__(self) -> int:
        return len(self.samples)


def validate_sample(sample: VillageSample, schema: Schema) -> None:
    for s in schema.graph.sources:
        if s.kind == "embedding":
            vec = sample.embeddings.get(s.id)
            if vec is None:
                raise LoadError(f"{sample.village_id}: missing embedding {s.id!r}")
            if vec.shape != (s.input_dim,):
                raise LoadError(
                    f"{sample.village_id}: embedding {s.id!r} has dim {vec.shape[0]}, "
                    f"expected {s.input_dim}"
                )
        else:
            vec = sample.facts.get(s.id)
            if vec is None:
                raise LoadError(f"{sample.village_id}: missing fact {s.id!r}")
            if vec.shape != (s.input_dim,):
                raise LoadError(
                    f"{sample.village_id}: fact {s.id!r} has dim {vec.shape[0]}, "
                    f"expected {s.input_dim}"
                )
    for st in schema.subtypes:
        label = sample.labels.get(st.key)
        if label is None:
            raise LoadError(f"{sample.village_id}: missing label {st.key!r}")
        if not (0 <= label < st.num_classes):
            raise LoadError(
                f"{sample.village_id}: label {label} out of range for {st.key} "
                f"({st.num_classes} classes)"
            )


# ---------------------------------------------------------------------------
# embedding blobs: HGNNEMB1 | u32 count | u32 dim | count*dim float32 (LE)


def write_embeddings(vectors: Sequence[np.ndarray], path: str | Path, dim: int | None = None) -> None:
    vectors = list(vectors)
    if vectors:
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ValueError(f"write_embeddings: mixed dims {sorted(dims)}")
        dim = dims.pop()
    else:
        dim = int(dim or 0)
    payload = np.ascontiguousarray(
        np.stack(vectors).astype("<f4") if vectors else np.zeros((0, dim), dtype="<f4")
    )
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", len(vectors), dim))
        fh.write(payload.tobytes())


def read_embeddings(path: str | Path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < len(EMB_MAGIC) + 8:
        raise BlobFormatError(f"{path}: truncated header")
    if raw[: len(EMB_MAGIC)] != EMB_MAGIC:
        raise BlobFormatError(f"{path}: bad magic {raw[:8]!r}")
    count, dim = struct.unpack_from("<II", raw, len(EMB_MAGIC))
    expected = len(EMB_MAGIC) + 8 + count * dim * 4
    if len(raw) != expected:
        raise BlobFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=len(EMB_MAGIC) + 8)
    return [data[i * dim : (i + 1) * dim].copy() for i in range(count)]


# ---------------------------------------------------------------------------
# manifest


def write_manifest(dataset: Dataset, schema: Schema, out_dir: str | Path) -> Path:
    """Write manifest.json plus one embedding blob per village; returns the
    manifest path."""
    out = Path(out_dir)
    (out / "blobs").mkdir(parents=True, exist_ok=True)
    emb_ids = [s.id for s in schema.embedding_sources()]
    villages = []
    for sample in dataset.samples:
        blob_rel = f"blobs/{sample.village_id}.emb"
        write_embeddings([sample.embeddings[sid] for sid in emb_ids], out / blob_rel)
        villages.append(
            {
                "village_id": sample.village_id,
                "blob": blob_rel,
                "facts": {sid: [float(v) for v in sample.facts[sid]]
                          for sid in (s.id for s in schema.fact_sources())},
                "labels": dict(sample.labels),
            }
        )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "embedding_sources": emb_ids,
        "villages": villages,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def read_manifest(path: str | Path, schema: Schema) -> Dataset:
    """Load and validate a dataset; sample order follows the manifest."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise LoadError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    emb_ids = list(doc["embedding_sources"])
    base = path.parent
    samples = []
    for row in doc["villages"]:
        vid = str(row["village_id"])
        blob = base / row["blob"]
        if not blob.exists():
            raise LoadError(f"{vid}: missing blob {row['blob']!r}")
        vectors = read_embeddings(blob)
        if len(vectors) != len(emb_ids):
            raise LoadError(f"{vid}: blob holds {len(vectors)} vectors, expected {len(emb_ids)}")
        sample = VillageSample(
            village_id=vid,
            embeddings=dict(zip(emb_ids, vectors)),
            facts={sid: np.asarray(v, dtype=np.float64) for sid, v in row["facts"].items()},
            labels={k: int(v) for k, v in row["labels"].items()},
        )
        validate_sample(sample, schema)
        samples.append(sample)
    return Dataset(samples=samples)


# ---------------------------------------------------------------------------
# standardization and splitting


def fit_standardization(samples: Sequence[VillageSample], schema: Schema) -> Standardization:
    mean: dict[str, np.ndarray] = {}
    std: dict[str, np.ndarray] = {}
    for s in schema.fact_sources():
        stack = np.stack([smp.facts[s.id] for smp in samples])
        mean[s.id] = stack.mean(axis=0)
        std[s.id] = np.maximum(stack.std(axis=0), STD_FLOOR)
    return Standardization(mean=mean, std=std)


def split_dataset(dataset: Dataset, ratio: float, seed: int, schema: Schema) -> tuple[Dataset, Dataset]:
    """Seeded shuffle + split; standardization is fitted on the training
    side only and applied to both."""
    n = len(dataset)
    if n < 2:
        raise ValueError(f"split_dataset: need at least 2 samples, got {n}")
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"split_dataset: ratio must be in (0,1), got {ratio}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(n * ratio), 1), n - 1)
    train_idx, test_idx = order[:n_train], order[n_train:]

    scaler = fit_standardization([dataset.samples[i] for i in train_idx], schema)

    def transformed(idx):
        out = []
        for i in idx:
            s = dataset.samples[i]
            out.append(
                VillageSample(
                    village_id=s.village_id,
                    embeddings=s.embeddings,
                    facts=scaler.apply(s.facts),
                    labels=s.labels,
                )
            )
        return out

    return (
        Dataset(samples=transformed(train_idx), standardization=scaler),
        Dataset(samples=transformed(test_idx), standardization=scaler),
    )


# ---------------------------------------------------------------------------
# synthetic generator with a planted-rule label oracle

_LATENT_DIM = 4  # [S-score, V-score, R-score, bias]


@dataclass
class OracleReport:
    """Replayable description of the planted labelling rules."""

    n: int
    seed: int
    noise: float
    subtypes: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "seed": self.seed,
            "noise": self.noise,
            "subtypes": self.subtypes,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "OracleReport":
        return cls(n=doc["n"], seed=doc["seed"], noise=doc["noise"], subtypes=doc["subtypes"])


def rule_score(facts: dict[str, np.ndarray], rule: dict[str, Any]) -> float:
    """The scalar the planted rule thresholds, recomputed from raw facts."""
    z = 0.0
    for sid, w, c, s in zip(rule["sources"], rule["weights"], rule["centers"], rule["scales"]):
        x = facts[sid]
        for j in range(len(w)):
            z += w[j] * (float(x[j]) - c[j]) / s[j]
    return z


def rule_label(facts: dict[str, np.ndarray], rule: dict[str, Any]) -> int:
    z = rule_score(facts, rule)
    return int(np.searchsorted(np.asarray(rule["thresholds"]), z, side="right"))


def replay_oracle(dataset: Dataset, report: OracleReport) -> dict[str, float]:
    """Fraction of stored labels matching a pure rule replay, per subtype.

    Facts must be the raw generated values (replay before standardization).
    """
    agreement = {}
    for key, rule in report.subtypes.items():
        hits = sum(
            1 for s in dataset.samples if rule_label(s.facts, rule) == s.labels[key]
        )
        agreement[key] = hits / len(dataset)
    return agreement


def generate_synthetic(
    n: int, seed: int, noise: float, schema: Schema
) -> tuple[Dataset, OracleReport]:
    """Seeded synthetic villages whose labels follow known planted rules.

    With flip probability `noise` a label is replaced by a uniform class, so
    the Bayes-optimal accuracy per subtype is 1 - noise*(C-1)/C.
    """
    if n < 2:
        raise ValueError(f"generate_synthetic: need n >= 2, got {n}")
    if not (0.0 <= noise <= 1.0):
        raise ValueError(f"generate_synthetic: noise must be in [0,1], got {noise}")
    rng = np.random.default_rng(seed)
    fact_sources = schema.fact_sources()
    emb_sources = schema.embedding_sources()

    # per-fact location/scale: deliberately spanning orders of magnitude
    dist = {}
    for i, s in enumerate(fact_sources):
        unit = 10.0 ** ((i % 5) - 2)
        dist[s.id] = (
            rng.uniform(-1.0, 1.0, size=s.input_dim) * unit,
            rng.uniform(0.5, 2.0, size=s.input_dim) * unit,
        )

    # per-subtype rule weights over the relation-set facts; embeddings in a
    # relation set carry no plantable scalar, so rules use the fact members
    fact_by_id = {s.id: s for s in fact_sources}
    rules: dict[str, dict[str, Any]] = {}
    for st in schema.subtypes:
        sids = [sid for sid in schema.relation_map[st.key] if sid in fact_by_id]
        if not sids:
            raise ValueError(
                f"generate_synthetic: relation set of {st.key} has no fact source "
                "to plant a rule on"
            )
        weights, centers, scales = [], [], []
        for sid in sids:
            src = fact_by_id[sid]
            signs = rng.choice([-1.0, 1.0], size=src.input_dim)
            weights.append((signs * rng.uniform(0.5, 1.5, size=src.input_dim)).tolist())
            centers.append(dist[sid][0].tolist())
            scales.append(dist[sid][1].tolist())
        rules[st.key] = {
            "sources": list(sids),
            "weights": weights,
            "centers": centers,
            "scales": scales,
            "num_classes": st.num_classes,
        }

    # per-embedding-source mixing matrix for the low-rank signal
    mix = {
        s.id: rng.normal(0.0, 1.0, size=(_LATENT_DIM, s.input_dim)) / np.sqrt(_LATENT_DIM)
        for s in emb_sources
    }

    # pass 1: facts
    all_facts: list[dict[str, np.ndarray]] = []
    for _ in range(n):
        facts = {}
        for s in fact_sources:
            loc, scale = dist[s.id]
            if s.id == "geo_admin_division":
                onehot = np.zeros(s.input_dim)
                onehot[rng.integers(s.input_dim)] = 1.0
                facts[s.id] = onehot
            else:
                facts[s.id] = rng.normal(loc, scale)
        all_facts.append(facts)

    # rule scores and equal-mass thresholds over the generated population
    scores = {
        st.key: np.array([rule_score(f, rules[st.key]) for f in all_facts])
        for st in schema.subtypes
    }
    for st in schema.subtypes:
        qs = [j / st.num_classes for j in range(1, st.num_classes)]
        thresholds = np.quantile(scores[st.key], qs)
        rules[st.key]["thresholds"] = [float(t) for t in thresholds]

    # pass 2: labels (rule + noise flips) and embeddings
    samples: list[VillageSample] = []
    group_keys = {g: schema.subtype_keys(g) for g in ("S", "V", "R")}
    for i in range(n):
        facts = all_facts[i]
        labels = {}
        for st in schema.subtypes:
            lab = rule_label(facts, rules[st.key])
            if noise > 0.0 and rng.random() < noise:
                lab = int(rng.integers(st.num_classes))
            labels[st.key] = lab
        latent = np.array(
            [
                np.mean([scores[k][i] for k in group_keys["S"]]),
                np.mean([scores[k][i] for k in group_keys["V"]]),
                np.mean([scores[k][i] for k in group_keys["R"]]),
                1.0,
            ]
        )
        embeddings = {
            s.id: (latent @ mix[s.id] + 0.5 * rng.normal(size=s.input_dim)).astype(np.float32)
            for s in emb_sources
        }
        samples.append(
            VillageSample(
                village_id=f"syn{i:05d}",
                embeddings=embeddings,
                facts=facts,
                labels=labels,
            )
        )

    report = OracleReport(n=n, seed=seed, noise=noise)
    for st in schema.subtypes:
        rule = rules[st.key]
        terms = ", ".join(
            f"{w}*std({sid})" for sid, ws in zip(rule["sources"], rule["weights"])
            for w in [[round(x, 3) for x in ws]]
        )
        report.subtypes[st.key] = {
            **rule,
            "bayes_accuracy": 1.0 - noise * (st.num_classes - 1) / st.num_classes,
            "rule": f"class = bin(sum[{terms}]; thresholds="
                    f"{[round(t, 4) for t in rule['thresholds']]})",
        }
    return Dataset(samples=samples), report
