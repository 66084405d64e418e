"""Model configuration files and run manifests.

The JSON schema mirrors the model structure: a ``partition`` of 1-based
variable indices, one ``generator``/``stdf`` pair per cluster, a
``radial`` copula block and an optional ``seed``.  Fit workflows may omit
the numeric parameters (``allow_partial``) since those are estimated.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time

import numpy as np

from .errors import ValidationError
from .generator import FAMILIES, ArchimedeanGenerator
from .sampler import ClusterPartition, ClusteredModelSpec, RadialCopulaSpec
from .stdf import IndependenceStdf, LogisticStdf


def _require(doc, key, path):
    if key not in doc:
        raise ValidationError(f"missing required key {key!r}", code="schema",
                              path=path)
    return doc[key]


def parse_partition(doc, path="/partition"):
    """Parse 1-based index blocks into a :class:`ClusterPartition`."""
    if not isinstance(doc, list) or not all(isinstance(b, list) for b in doc):
        raise ValidationError("partition must be a list of index lists",
                              code="schema", path=path)
    blocks = []
    for pos, block in enumerate(doc):
        conv = []
        for i in block:
            if not isinstance(i, int) or i < 1:
                raise ValidationError(
                    f"indices are 1-based integers, got {i!r}",
                    code="schema", path=f"{path}/{pos}",
                )
            conv.append(i - 1)
        blocks.append(tuple(conv))
    return ClusterPartition(tuple(blocks))


def _parse_generator(doc, path, allow_partial):
    family = str(_require(doc, "family", path)).lower()
    if family not in FAMILIES:
        raise ValidationError(f"unknown generator family {family!r}",
                              code="param-domain", path=path)
    if "theta" not in doc:
        if allow_partial:
            return family, None
        raise ValidationError("missing generator parameter theta",
                              code="schema", path=path)
    return family, ArchimedeanGenerator(family, float(doc["theta"]))


def _parse_stdf(doc, dim, path, allow_partial):
    if doc is None:
        if allow_partial:
            return None
        raise ValidationError("missing stdf block", code="schema", path=path)
    family = str(_require(doc, "family", path)).lower()
    given_dim = doc.get("dim")
    if given_dim is not None and int(given_dim) != dim:
        raise ValidationError(
            f"stdf dim {given_dim} does not match the cluster size {dim}",
            code="dim-mismatch", path=f"{path}/dim",
        )
    if family == "logistic":
        if "vartheta" not in doc:
            if allow_partial:
                return None
            raise ValidationError("missing logistic parameter vartheta",
                                  code="schema", path=path)
        return LogisticStdf(float(doc["vartheta"]), dim)
    if family == "independence":
        return IndependenceStdf(dim)
    raise ValidationError(f"unknown stdf family {family!r}",
                          code="param-domain", path=path)


def _parse_radial(doc, path="/radial"):
    if doc is None:
        return RadialCopulaSpec.independence()
    family = str(_require(doc, "family", path)).lower()
    if family == "independence":
        return RadialCopulaSpec.independence()
    if family == "gaussian":
        corr = _require(doc, "corr", path)
        return RadialCopulaSpec.gaussian(np.asarray(corr, dtype=float))
    if family == "gumbel":
        return RadialCopulaSpec.gumbel(float(_require(doc, "vartheta", path)))
    raise ValidationError(f"unknown radial copula family {family!r}",
                          code="param-domain", path=path)


class ModelConfig:
    """Parsed configuration: partition, families and (maybe) full model."""

    def __init__(self, partition, families, generators, stdfs, radial, seed, raw):
        self.partition = partition
        self.families = families
        self.generators = generators
        self.stdfs = stdfs
        self.radial = radial
        self.seed = seed
        self.raw = raw

    @property
    def is_complete(self):
        return all(g is not None for g in self.generators) and all(
            s is not None for s in self.stdfs
        )

    def model(self):
        if not self.is_complete:
            raise ValidationError(
                "config lacks numeric parameters; this command needs a fully "
                "specified model", code="schema",
            )
        return ClusteredModelSpec(self.partition, tuple(self.generators),
                                  tuple(self.stdfs), self.radial)

    def model_with(self, thetas, varthetas=None):
        """Model with estimated parameters plugged in (clamped to domains)."""
        gens, stdfs = [], []
        for k, fam in enumerate(self.families):
            theta = float(thetas[k])
            if fam == "joe":
                theta = max(theta, 1.0)
            else:
                theta = max(theta, 1e-6)
            gens.append(ArchimedeanGenerator(fam, theta))
            if varthetas is not None:
                dim = len(self.partition.blocks[k])
                stdfs.append(LogisticStdf(max(float(varthetas[k]), 1.0), dim))
            else:
                stdfs.append(self.stdfs[k])
        if any(s is None for s in stdfs):
            raise ValidationError("stdf parameters unavailable", code="schema")
        return ClusteredModelSpec(self.partition, tuple(gens), tuple(stdfs),
                                  self.radial)


def load_config(source, allow_partial=False):
    """Parse a config document (path, JSON string or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source if str(source).lstrip().startswith("{") else open(source).read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", code="schema")
    partition = parse_partition(_require(doc, "partition", "/"))
    clusters = _require(doc, "clusters", "/")
    if not isinstance(clusters, list) or len(clusters) != partition.n_clusters:
        raise ValidationError(
            f"need exactly {partition.n_clusters} cluster blocks",
            code="dim-mismatch", path="/clusters",
        )
    families, generators, stdfs = [], [], []
    for pos, cl in enumerate(clusters):
        path = f"/clusters/{pos}"
        fam, gen = _parse_generator(_require(cl, "generator", path),
                                    f"{path}/generator", allow_partial)
        families.append(fam)
        generators.append(gen)
        stdfs.append(_parse_stdf(cl.get("stdf"), len(partition.blocks[pos]),
                                 f"{path}/stdf", allow_partial))
    radial = _parse_radial(doc.get("radial"))
    seed = doc.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        raise ValidationError("seed must be a nonnegative integer",
                              code="schema", path="/seed")
    cfg = ModelConfig(partition, tuple(families), tuple(generators),
                      tuple(stdfs), radial, seed, doc)
    if not allow_partial:
        cfg.model()  # run the full cross-validation now
    return cfg


def model_to_dict(model, seed=None):
    doc = {
        "partition": model.partition.to_dict(),
        "clusters": [
            {"generator": g.to_dict(), "stdf": s.to_dict()}
            for g, s in zip(model.generators, model.stdfs)
        ],
        "radial": model.radial.to_dict(),
    }
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def write_manifest(path, command, args, config_echo, seed, outputs, started):
    """Run manifest: command echo, environment, seed, output digests.

    Re-running the recorded command reproduces every listed output
    bit-identically (the manifest itself carries timing metadata and is
    not part of that guarantee).
    """
    import pandas
    import scipy

    from . import __version__

    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "seed": seed,
        "config": config_echo,
        "versions": {
            "archimax": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pandas.__version__,
        },
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "elapsed_seconds": round(time.time() - started, 3),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
