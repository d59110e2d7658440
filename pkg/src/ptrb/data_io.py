"""Point-cloud files (OFF, ASCII PLY, XYZ), dataset manifests and synthetic shapes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import normalize_cloud
from .numerics import stream

SHAPES = ("sphere", "cube", "cylinder", "cone")


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


class DataError(ValueError):
    pass


# ------------------------------------------------------------------ parsing

def _floats(tokens, path, lineno, count=3):
    if len(tokens) < count:
        raise ParseError(path, lineno, f"expected {count} values, got {len(tokens)}")
    try:
        return [float(t) for t in tokens[:count]]
    except ValueError:
        raise ParseError(path, lineno, f"non-numeric coordinate in {' '.join(tokens)!r}") from None


def _content_lines(text):
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def parse_xyz(path, text):
    pts = [_floats(line.replace(",", " ").split(), path, i) for i, line in _content_lines(text)]
    if not pts:
        raise ParseError(path, 1, "no points")
    return np.array(pts, dtype=np.float64)


def parse_off(path, text):
    lines = _content_lines(text)
    try:
        i, head = next(lines)
    except StopIteration:
        raise ParseError(path, 1, "empty file") from None
    if not head.startswith("OFF"):
        raise ParseError(path, i, f"expected 'OFF' header, got {head[:20]!r}")
    rest = head[3:].split()
    try:
        if not rest:
            i, counts_line = next(lines)
            rest = counts_line.split()
        nv = int(rest[0])
    except StopIteration:
        raise ParseError(path, i, "missing vertex/face counts") from None
    except (ValueError, IndexError):
        raise ParseError(path, i, "malformed counts line") from None
    pts = []
    for _ in range(nv):
        try:
            i, line = next(lines)
        except StopIteration:
            raise ParseError(path, i + 1, f"truncated: expected {nv} vertices, got {len(pts)}") from None
        pts.append(_floats(line.split(), path, i))
    if not pts:
        raise ParseError(path, i, "no vertices")
    return np.array(pts, dtype=np.float64)


def parse_ply(path, text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(path, 1, "expected 'ply' magic")
    elements = []          # [name, count, [props]]
    fmt = None
    lineno = 1
    for lineno in range(2, len(lines) + 1):
        tok = lines[lineno - 1].split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element":
            try:
                elements.append([tok[1], int(tok[2]), []])
            except (IndexError, ValueError):
                raise ParseError(path, lineno, "malformed element line") from None
        elif tok[0] == "property":
            if not elements:
                raise ParseError(path, lineno, "property before any element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            break
        else:
            raise ParseError(path, lineno, f"unexpected header line {tok[0]!r}")
    else:
        raise ParseError(path, lineno, "missing end_header")
    if fmt != "ascii":
        raise ParseError(path, lineno, f"only ascii PLY is supported, got format {fmt!r}")
    body = lineno
    pts = None
    for name, count, props in elements:
        if name == "vertex":
            try:
                cols = [props.index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise ParseError(path, lineno, "vertex element lacks x/y/z properties") from None
            pts = []
            for k in range(count):
                ln = body + 1 + k
                if ln > len(lines):
                    raise ParseError(path, ln, f"truncated: expected {count} vertices, got {k}")
                tok = lines[ln - 1].split()
                if len(tok) < len(props):
                    raise ParseError(path, ln, f"expected {len(props)} values, got {len(tok)}")
                vals = _floats([tok[c] for c in cols], path, ln)
                pts.append(vals)
            break
        body += count
    if pts is None:
        raise ParseError(path, lineno, "no vertex element")
    if not pts:
        raise ParseError(path, lineno, "no vertices")
    return np.array(pts, dtype=np.float64)


_PARSERS = {"xyz": parse_xyz, "off": parse_off, "ply": parse_ply}


def parse_cloud(path, fmt=None):
    """Read an (N, 3) coordinate array from an OFF, ASCII PLY or XYZ file."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "txt":
        fmt = "xyz"
    if fmt not in _PARSERS:
        raise ParseError(path, 0, f"unknown point cloud format {fmt!r}")
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as e:
        raise ParseError(path, 0, f"cannot read file: {e}") from e
    return _PARSERS[fmt](path, text)


def write_xyz(path, points):
    np.savetxt(path, np.asarray(points), fmt="%.17g")


def write_off(path, points):
    pts = np.asarray(points)
    with open(path, "w") as f:
        f.write(f"OFF\n{len(pts)} 0 0\n")
        np.savetxt(f, pts, fmt="%.17g")


def write_ply(path, points, colors=None):
    pts = np.asarray(points)
    head = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
            "property float x", "property float y", "property float z"]
    if colors is not None:
        head += ["property uchar red", "property uchar green", "property uchar blue"]
    head.append("end_header")
    with open(path, "w") as f:
        f.write("\n".join(head) + "\n")
        for i, p in enumerate(pts):
            row = " ".join(f"{v:.9g}" for v in p)
            if colors is not None:
                row += " " + " ".join(str(int(c)) for c in colors[i])
            f.write(row + "\n")


# --------------------------------------------------------------- resampling

def resample(points, n, rng):
    """Subsample without replacement, or pad by sampling with replacement, to ``n`` points."""
    pts = np.asarray(points)
    m = len(pts)
    if m < 1:
        raise DataError("cannot resample an empty cloud")
    if m == n:
        return pts.copy()
    if m > n:
        return pts[np.sort(rng.choice(m, n, replace=False))]
    extra = rng.choice(m, n - m, replace=True)
    return np.concatenate([pts, pts[extra]])


# ---------------------------------------------------------------- synthetic

def _sphere(n, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _cube(n, rng):
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-1, 1, size=(n, 2))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts = np.empty((n, 3))
    for a in range(3):
        others = [b for b in range(3) if b != a]
        sel = axis == a
        pts[sel, a] = sign[sel]
        pts[np.ix_(sel, others)] = uv[sel]
    return pts


def _disk(n, rng):
    r = np.sqrt(rng.uniform(size=n))
    th = rng.uniform(0, 2 * np.pi, size=n)
    return r * np.cos(th), r * np.sin(th)


def _cylinder(n, rng):
    # radius 1, height 2: lateral area 4*pi, caps 2*pi
    lateral = rng.uniform(size=n) < 2 / 3
    th = rng.uniform(0, 2 * np.pi, size=n)
    z = rng.uniform(-1, 1, size=n)
    dx, dy = _disk(n, rng)
    cap_z = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    x = np.where(lateral, np.cos(th), dx)
    y = np.where(lateral, np.sin(th), dy)
    return np.stack([x, y, np.where(lateral, z, cap_z)], axis=1)


def _cone(n, rng):
    # base radius 1 at z=-1, apex at z=1: lateral area pi*sqrt(5), base pi
    lateral = rng.uniform(size=n) < np.sqrt(5) / (np.sqrt(5) + 1)
    rho = np.sqrt(rng.uniform(size=n))
    th = rng.uniform(0, 2 * np.pi, size=n)
    dx, dy = _disk(n, rng)
    x = np.where(lateral, rho * np.cos(th), dx)
    y = np.where(lateral, rho * np.sin(th), dy)
    z = np.where(lateral, 1.0 - 2.0 * rho, -1.0)
    return np.stack([x, y, z], axis=1)


_SAMPLERS = {"sphere": _sphere, "cube": _cube, "cylinder": _cylinder, "cone": _cone}


def sample_shape(kind, n, rng):
    """``n`` points uniform on the surface of a canonical shape (before rotation/jitter)."""
    if kind not in _SAMPLERS:
        raise DataError(f"unknown shape {kind!r}; choose from {SHAPES}")
    return _SAMPLERS[kind](n, rng)


def rotate_z(points, angle):
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return points @ rot.T


@dataclass
class Dataset:
    points: np.ndarray                 # (M, N, 3)
    labels: np.ndarray                 # (M,)
    class_names: list
    split: str = "train"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise DataError(f"dataset points must be (M, N, 3), got {self.points.shape}")
        if len(self.labels) != len(self.points):
            raise DataError("labels and clouds differ in count")

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def num_points(self):
        return self.points.shape[1]

    def subset(self, idx):
        return Dataset(self.points[idx], self.labels[idx], self.class_names, self.split)


@dataclass
class SyntheticSpec:
    classes: list = field(default_factory=lambda: list(SHAPES))
    per_class: int = 64
    num_points: int = 256
    jitter: float = 0.01
    seed: int = 0
    split: str = "train"

    def __post_init__(self):
        bad = [c for c in self.classes if c not in SHAPES]
        if bad or not self.classes:
            raise DataError(f"unknown shape classes {bad}; choose from {SHAPES}")
        if self.per_class < 1 or self.num_points < 1 or self.jitter < 0:
            raise DataError("per_class and num_points must be positive, jitter >= 0")


def generate_synthetic(spec):
    """Deterministic labelled clouds: surface samples, random z-rotation, jitter, normalization."""
    clouds, labels = [], []
    for label, kind in enumerate(spec.classes):
        for i in range(spec.per_class):
            rng = stream(spec.seed, "synthetic", spec.split, kind, i)
            pts = sample_shape(kind, spec.num_points, rng)
            pts = rotate_z(pts, rng.uniform(0, 2 * np.pi))
            if spec.jitter > 0:
                pts = pts + rng.normal(scale=spec.jitter, size=pts.shape)
            clouds.append(normalize_cloud(pts).points)
            labels.append(label)
    return Dataset(np.stack(clouds), np.array(labels), list(spec.classes), spec.split)


# ---------------------------------------------------------------- manifests

@dataclass
class DatasetManifest:
    root: Path
    entries: list                      # [(relative path, class id)]
    class_names: list
    split: str
    num_points: int

    def validate(self):
        c = len(self.class_names)
        if c < 1:
            raise DataError("manifest lists no classes")
        used = sorted({lab for _, lab in self.entries})
        if any(not 0 <= lab < c for lab in used):
            raise DataError(f"class ids must lie in [0, {c})")
        for rel, _ in self.entries:
            if not (self.root / rel).is_file():
                raise DataError(f"missing file {self.root / rel}")
        return self

    def load(self, seed=0):
        """Parse, normalize and resample every entry to ``num_points``."""
        clouds, labels = [], []
        for i, (rel, lab) in enumerate(self.entries):
            raw = parse_cloud(self.root / rel)
            pts = normalize_cloud(resample(raw, self.num_points, stream(seed, "resample", i))).points
            clouds.append(pts)
            labels.append(lab)
        if not clouds:
            raise DataError(f"manifest for split {self.split!r} is empty")
        return Dataset(np.stack(clouds), np.array(labels), list(self.class_names), self.split)

    def to_json(self):
        return {
            "class_names": self.class_names,
            "split": self.split,
            "num_points": self.num_points,
            "entries": [{"path": str(p), "label": int(lab)} for p, lab in self.entries],
        }


def load_manifest(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
        entries = [(e["path"], int(e["label"])) for e in d["entries"]]
        man = DatasetManifest(path.parent, entries, list(d["class_names"]),
                              d.get("split", "train"), int(d["num_points"]))
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e.strerror}") from e
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed manifest {path}: {e}") from e
    return man.validate()


def load_split(data_dir, split):
    return load_manifest(Path(data_dir) / f"{split}.json").load()


def export_dataset(dataset, out_dir, split=None):
    """Write each cloud as XYZ under ``out_dir/<split>/`` plus ``out_dir/<split>.json``."""
    split = split or dataset.split
    out_dir = Path(out_dir)
    (out_dir / split).mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (pts, lab) in enumerate(zip(dataset.points, dataset.labels)):
        rel = Path(split) / f"{dataset.class_names[lab]}_{i:05d}.xyz"
        write_xyz(out_dir / rel, pts)
        entries.append((rel.as_posix(), int(lab)))
    man = DatasetManifest(out_dir, entries, list(dataset.class_names), split, dataset.num_points)
    (out_dir / f"{split}.json").write_text(json.dumps(man.to_json(), indent=1))
    return man


# ------------------------------------------------------------- augmentation

def augment(points, rng, scale=(0.8, 1.2), translate=0.1, rotate=False):
    """Random isotropic scale, translation and (optionally) rotation about z, per cloud."""
    pts = np.array(points, dtype=np.float64)
    single = pts.ndim == 2
    if single:
        pts = pts[None]
    n = len(pts)
    if rotate:
        for i in range(n):
            pts[i] = rotate_z(pts[i], rng.uniform(0, 2 * np.pi))
    s = rng.uniform(scale[0], scale[1], size=(n, 1, 1))
    t = rng.uniform(-translate, translate, size=(n, 1, 3))
    pts = pts * s + t
    return pts[0] if single else pts
