"""Unstructured T4/H8 meshes and their reference-configuration precompute.

Everything the total-Lagrangian scheme can evaluate once lives in
:class:`PrecomputedMesh`: shape-function gradients, element volumes,
lumped nodal volumes (mass and thermal mass are density-scaled copies),
the node-to-element gather table and the H8 hourglass base vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "Mesh",
    "PrecomputedMesh",
    "load_mesh",
    "read_mesh",
    "dump_mesh",
    "precompute",
    "critical_timestep",
    "box_mesh",
    "NODES_PER_KIND",
]

NODES_PER_KIND = {"T4": 4, "H8": 8}

# natural coordinates of the trilinear brick, bottom face then top face, both counterclockwise
H8_NATURAL = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)

# hourglass base vectors xi*eta, eta*zeta, zeta*xi, xi*eta*zeta at the nodes
H8_HOURGLASS_BASE = np.stack(
    [
        H8_NATURAL[:, 0] * H8_NATURAL[:, 1],
        H8_NATURAL[:, 1] * H8_NATURAL[:, 2],
        H8_NATURAL[:, 2] * H8_NATURAL[:, 0],
        H8_NATURAL[:, 0] * H8_NATURAL[:, 1] * H8_NATURAL[:, 2],
    ]
)

T4_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
H8_EDGES = np.array(
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]]
)
# six tetrahedra sharing the 0-6 diagonal; conforming across a structured grid
H8_TO_T4 = np.array(
    [[0, 1, 2, 6], [0, 2, 3, 6], [0, 3, 7, 6], [0, 7, 4, 6], [0, 4, 5, 6], [0, 5, 1, 6]]
)


class MeshError(ValueError):
    """Invalid mesh content. ``line`` is the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    kind: str
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    element_sets: dict[str, np.ndarray] = field(default_factory=dict)
    fiber_dirs: np.ndarray | None = None
    expansion_axes: np.ndarray | None = None

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise MeshError("nodes must be an (N, 3) array")
        if self.kind not in NODES_PER_KIND:
            raise MeshError(f"unknown element kind {self.kind!r}; expected T4 or H8")
        if elements.ndim != 2 or elements.shape[1] != NODES_PER_KIND[self.kind]:
            raise MeshError(f"{self.kind} elements need {NODES_PER_KIND[self.kind]} nodes each")
        n = len(nodes)
        bad = np.nonzero((elements < 0) | (elements >= n))[0]
        if bad.size:
            raise MeshError(f"element {bad[0] + 1} references a node index out of range 1..{n}")
        for name, ids in self.node_sets.items():
            ids = np.asarray(ids)
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise MeshError(f"node set {name!r} references a node out of range")
        for name, ids in self.element_sets.items():
            ids = np.asarray(ids)
            if ids.size and (ids.min() < 0 or ids.max() >= len(elements)):
                raise MeshError(f"element set {name!r} references an element out of range")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(
            self, "node_sets", {k: np.asarray(v, dtype=np.int64) for k, v in self.node_sets.items()}
        )
        object.__setattr__(
            self,
            "element_sets",
            {k: np.asarray(v, dtype=np.int64) for k, v in self.element_sets.items()},
        )
        if self.fiber_dirs is not None:
            fib = np.asarray(self.fiber_dirs, dtype=float).reshape(len(elements), 3)
            _require_unit(fib, "fiber direction")
            object.__setattr__(self, "fiber_dirs", fib)
        if self.expansion_axes is not None:
            ax = np.asarray(self.expansion_axes, dtype=float).reshape(len(elements), -1, 3)
            _require_unit(ax, "expansion axis")
            object.__setattr__(self, "expansion_axes", ax)
        for e, vol in enumerate(_orientation_measure(nodes, elements, self.kind)):
            if not vol > 0:
                raise MeshError(f"element {e + 1} is inverted or degenerate")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def nodes_per_element(self) -> int:
        return NODES_PER_KIND[self.kind]

    def element_set(self, name: str) -> np.ndarray:
        if name == "all":
            return np.arange(self.n_elements)
        try:
            return self.element_sets[name]
        except KeyError:
            raise MeshError(f"unknown element set {name!r}") from None

    def node_set(self, name: str) -> np.ndarray:
        if name == "all":
            return np.arange(self.n_nodes)
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}") from None

    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def min_edge_lengths(self) -> np.ndarray:
        edges = T4_EDGES if self.kind == "T4" else H8_EDGES
        x = self.nodes[self.elements]
        d = x[:, edges[:, 0]] - x[:, edges[:, 1]]
        return np.sqrt((d * d).sum(axis=-1)).min(axis=1)

    def as_tetrahedra(self) -> np.ndarray:
        """Connectivity as T4 (H8 split into six tets each)."""
        if self.kind == "T4":
            return self.elements
        return self.elements[:, H8_TO_T4].reshape(-1, 4)


def _require_unit(v: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(v, axis=-1)
    bad = np.nonzero(np.abs(norms - 1.0) > 1e-9)
    if bad[0].size:
        raise MeshError(f"{what} of element {bad[0][0] + 1} is not a unit vector")


def _tet_volumes(x: np.ndarray) -> np.ndarray:
    a = x[:, 1] - x[:, 0]
    b = x[:, 2] - x[:, 0]
    c = x[:, 3] - x[:, 0]
    return np.einsum("ei,ei->e", a, np.cross(b, c)) / 6.0


def _h8_centroid_jacobians(x: np.ndarray) -> np.ndarray:
    # J_ij = dX_i/dxi_j at the centroid, dN_a/dxi = xi_a / 8
    return np.einsum("eai,aj->eij", x, H8_NATURAL) / 8.0


def _orientation_measure(nodes, elements, kind) -> np.ndarray:
    x = nodes[elements]
    if kind == "T4":
        return _tet_volumes(x)
    return np.linalg.det(_h8_centroid_jacobians(x))


# ----------------------------------------------------------------------------
# text format


def _header(tokens, lineno, nargs):
    if len(tokens) != nargs:
        raise MeshError(f"malformed header {' '.join(tokens)!r}", lineno)
    return tokens


def load_mesh(text: str) -> Mesh:
    """Parse the ``$section`` mesh text format (1-based ids) into a validated Mesh."""
    lines = [
        (i + 1, raw.split("#", 1)[0].split()) for i, raw in enumerate(text.splitlines())
    ]
    lines = [(i, t) for i, t in lines if t]
    pos = 0
    nodes = None
    elements = None
    kind = None
    node_sets: dict[str, list[int]] = {}
    elem_sets: dict[str, list[int]] = {}
    fibers = None
    axes = None

    def body(count, width, lineno, what):
        nonlocal pos
        rows = []
        for _ in range(count):
            if pos >= len(lines) or lines[pos][1][0].startswith("$"):
                raise MeshError(f"{what}: expected {count} lines", lines[pos - 1][0] if pos else lineno)
            ln, toks = lines[pos]
            pos += 1
            if width is not None and len(toks) not in width:
                raise MeshError(f"{what}: expected {' or '.join(map(str, width))} fields", ln)
            rows.append((ln, toks))
        return rows

    def id_list(count, lineno, what):
        nonlocal pos
        ids = []
        while len(ids) < count:
            if pos >= len(lines) or lines[pos][1][0].startswith("$"):
                raise MeshError(f"{what}: expected {count} ids, found {len(ids)}", lineno)
            ln, toks = lines[pos]
            pos += 1
            try:
                ids.extend(int(t) - 1 for t in toks)
            except ValueError:
                raise MeshError(f"{what}: non-integer id", ln) from None
        if len(ids) != count:
            raise MeshError(f"{what}: expected {count} ids, found {len(ids)}", lineno)
        return ids

    def number(tok, ln, cast=float):
        try:
            return cast(tok)
        except ValueError:
            raise MeshError(f"cannot parse {tok!r} as a number", ln) from None

    while pos < len(lines):
        lineno, toks = lines[pos]
        pos += 1
        head = toks[0]
        if head == "$nodes":
            count = number(_header(toks, lineno, 2)[1], lineno, int)
            rows = body(count, (4,), lineno, "$nodes")
            nodes = np.empty((count, 3))
            for k, (ln, t) in enumerate(rows):
                if number(t[0], ln, int) != k + 1:
                    raise MeshError(f"node ids must be consecutive from 1 (expected {k + 1})", ln)
                nodes[k] = [number(v, ln) for v in t[1:]]
        elif head == "$elements":
            _, count, k = _header(toks, lineno, 3)
            count = number(count, lineno, int)
            if k not in NODES_PER_KIND:
                raise MeshError(f"unknown element kind {k!r}", lineno)
            if kind is not None and kind != k:
                raise MeshError("mixed element kinds are not supported", lineno)
            kind = k
            npe = NODES_PER_KIND[k]
            rows = body(count, (npe + 1,), lineno, "$elements")
            block = np.empty((count, npe), dtype=np.int64)
            for r, (ln, t) in enumerate(rows):
                block[r] = [number(v, ln, int) - 1 for v in t[1:]]
            elements = block if elements is None else np.vstack([elements, block])
        elif head in ("$nodeset", "$elemset"):
            _, name, count = _header(toks, lineno, 3)
            ids = id_list(number(count, lineno, int), lineno, head)
            (node_sets if head == "$nodeset" else elem_sets)[name] = ids
        elif head in ("$fibers", "$expansion_axes"):
            count = number(_header(toks, lineno, 2)[1], lineno, int)
            width = (4,) if head == "$fibers" else (4, 7)
            rows = body(count, width, lineno, head)
            rows_parsed = {}
            for ln, t in rows:
                eid = number(t[0], ln, int) - 1
                rows_parsed[eid] = ([number(v, ln) for v in t[1:]], ln)
            if head == "$fibers":
                fibers = rows_parsed
            else:
                axes = rows_parsed
        else:
            raise MeshError(f"unexpected content {head!r}", lineno)

    if nodes is None:
        raise MeshError("missing $nodes section")
    if elements is None:
        raise MeshError("missing $elements section")
    n_el = len(elements)
    for e, row in enumerate(elements):
        if row.min() < 0 or row.max() >= len(nodes):
            raise MeshError(f"element {e + 1} references a node index out of range 1..{len(nodes)}")

    def per_element(table, width, what):
        if table is None:
            return None
        if len(table) != n_el:
            raise MeshError(f"{what} must list every element ({len(table)} of {n_el} given)")
        out = np.empty((n_el, width))
        for eid, (vals, ln) in table.items():
            if not 0 <= eid < n_el:
                raise MeshError(f"{what}: element id {eid + 1} out of range", ln)
            if len(vals) != width:
                raise MeshError(f"{what}: inconsistent vector count", ln)
            out[eid] = vals
        return out

    fiber_arr = per_element(fibers, 3, "$fibers")
    axes_arr = None
    if axes is not None:
        width = len(next(iter(axes.values()))[0])
        axes_arr = per_element(axes, width, "$expansion_axes").reshape(n_el, -1, 3)
    return Mesh(
        nodes=nodes,
        elements=elements,
        kind=kind,
        node_sets=node_sets,
        element_sets=elem_sets,
        fiber_dirs=fiber_arr,
        expansion_axes=axes_arr,
    )


def read_mesh(path) -> Mesh:
    with open(path, encoding="utf-8") as fh:
        return load_mesh(fh.read())


def dump_mesh(mesh: Mesh) -> str:
    """Serialise ``mesh`` to the text format read by :func:`load_mesh`."""
    out = [f"$nodes {mesh.n_nodes}"]
    out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.nodes.tolist())]
    out.append(f"$elements {mesh.n_elements} {mesh.kind}")
    out += [f"{e + 1} " + " ".join(str(n + 1) for n in row) for e, row in enumerate(mesh.elements.tolist())]
    for tag, sets in (("$nodeset", mesh.node_sets), ("$elemset", mesh.element_sets)):
        for name, ids in sets.items():
            out.append(f"{tag} {name} {len(ids)}")
            ids = [str(i + 1) for i in ids.tolist()]
            out += [" ".join(ids[k : k + 16]) for k in range(0, len(ids), 16)]
    if mesh.fiber_dirs is not None:
        out.append(f"$fibers {mesh.n_elements}")
        out += [f"{e + 1} " + " ".join(repr(v) for v in row) for e, row in enumerate(mesh.fiber_dirs.tolist())]
    if mesh.expansion_axes is not None:
        out.append(f"$expansion_axes {mesh.n_elements}")
        flat = mesh.expansion_axes.reshape(mesh.n_elements, -1).tolist()
        out += [f"{e + 1} " + " ".join(repr(v) for v in row) for e, row in enumerate(flat)]
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# precompute


@dataclass(frozen=True, eq=False)
class PrecomputedMesh:
    """Reference-configuration data; immutable and shareable between workers.

    ``grad_h0`` is ``(E, 3, n)``: column ``a`` is the reference gradient of the
    shape function of local node ``a``. ``ref_volume`` is the integration
    weight (``8 det J0`` for H8). ``node_volume`` is the lumped volume share.
    """

    mesh: Mesh
    grad_h0: np.ndarray
    ref_volume: np.ndarray
    det_J0: np.ndarray | None
    node_volume: np.ndarray
    lumped_mass: np.ndarray
    lumped_thermal_mass_ref: np.ndarray
    adjacency_ptr: np.ndarray
    adjacency_slot: np.ndarray
    hourglass: np.ndarray | None

    def node_element_adjacency(self, node: int) -> list[tuple[int, int]]:
        """``(element, local_node)`` pairs touching ``node``, in gather order."""
        npe = self.mesh.nodes_per_element
        slots = self.adjacency_slot[self.adjacency_ptr[node] : self.adjacency_ptr[node + 1]]
        return [(int(s // npe), int(s % npe)) for s in slots]

    def element_to_nodes(self, values: np.ndarray) -> np.ndarray:
        """Distribute per-element totals equally to their nodes (lumping)."""
        npe = self.mesh.nodes_per_element
        w = np.repeat(np.asarray(values, dtype=float) / npe, npe)
        return np.bincount(self.mesh.elements.ravel(), weights=w, minlength=self.mesh.n_nodes)


def _grad_t4(x: np.ndarray):
    A = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=1)
    Ainv = np.linalg.inv(A)
    grad = np.empty((len(x), 3, 4))
    grad[:, :, 1:] = Ainv
    grad[:, :, 0] = -Ainv.sum(axis=2)
    return grad, np.linalg.det(A) / 6.0


def _grad_h8(x: np.ndarray):
    J = _h8_centroid_jacobians(x)
    detJ = np.linalg.det(J)
    dN_dxi = H8_NATURAL / 8.0
    grad = np.einsum("eji,aj->eia", np.linalg.inv(J), dN_dxi)
    return grad, detJ


def hourglass_vectors(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Hourglass shape vectors ``gamma = Gamma - G (X^T Gamma)``, shape ``(E, 4, 8)``.

    They annihilate any nodal field linear in the reference coordinates.
    """
    proj = np.einsum("eai,ka->eki", x, H8_HOURGLASS_BASE)  # X^T Gamma_k
    return H8_HOURGLASS_BASE[None] - np.einsum("eki,eia->eka", proj, grad)


def precompute(mesh: Mesh, density: float, ref_specific_heat: float) -> PrecomputedMesh:
    x = mesh.nodes[mesh.elements]
    if mesh.kind == "T4":
        grad, vol = _grad_t4(x)
        det_J0 = None
        hg = None
    else:
        grad, det_J0 = _grad_h8(x)
        vol = 8.0 * det_J0
        hg = np.ascontiguousarray(hourglass_vectors(x, grad))
    bad = np.nonzero(~(vol > 0))[0]
    if bad.size:
        raise MeshError(f"element {bad[0] + 1} has nonpositive volume")
    npe = mesh.nodes_per_element
    flat = mesh.elements.ravel()
    node_volume = np.bincount(flat, weights=np.repeat(vol / npe, npe), minlength=mesh.n_nodes)
    # CSR gather table: slots e*npe+a sorted by node, then by element (stable)
    order = np.argsort(flat, kind="stable")
    ptr = np.zeros(mesh.n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=mesh.n_nodes), out=ptr[1:])
    for arr in (grad, vol, node_volume):
        arr.flags.writeable = False
    return PrecomputedMesh(
        mesh=mesh,
        grad_h0=np.ascontiguousarray(grad),
        ref_volume=np.ascontiguousarray(vol),
        det_J0=det_J0,
        node_volume=node_volume,
        lumped_mass=density * node_volume,
        lumped_thermal_mass_ref=density * ref_specific_heat * node_volume,
        adjacency_ptr=ptr,
        adjacency_slot=order.astype(np.int64),
        hourglass=hg,
    )


def _small_strain_B(grad: np.ndarray) -> np.ndarray:
    """Voigt strain-displacement matrices ``(E, 6, 3n)`` from ``(E, 3, n)`` gradients."""
    E, _, n = grad.shape
    B = np.zeros((E, 6, 3 * n))
    gx, gy, gz = grad[:, 0], grad[:, 1], grad[:, 2]
    B[:, 0, 0::3] = gx
    B[:, 1, 1::3] = gy
    B[:, 2, 2::3] = gz
    B[:, 3, 0::3] = gy
    B[:, 3, 1::3] = gx
    B[:, 4, 1::3] = gz
    B[:, 4, 2::3] = gy
    B[:, 5, 0::3] = gz
    B[:, 5, 2::3] = gx
    return B


def element_eigenvalue_bounds(pre: "PrecomputedMesh", material, hourglass_stiffness: float = 0.0):
    """Largest per-element generalized eigenvalues ``(thermal, mechanical)``.

    Each is ``max_e lambda_max(K_e, M_e)`` with the element's lumped mass share,
    an upper bound on the assembled ``lambda_max(K, M)``. The mechanical value
    uses the small-strain tangent at the reference state; fiber stiffening is
    bounded by adding ``2 eta_a`` to the shear modulus.
    """
    hyper = material.hyperelastic
    thermal = material.thermal
    grad = pre.grad_h0
    n = grad.shape[2]
    rho = thermal.density
    # thermal: V k G^T G against rho c V / n
    gtg = np.einsum("eia,eib->eab", grad, grad)
    lam_th = np.linalg.eigvalsh(gtg)[:, -1].max() * thermal.max_conductivity() * n / (
        rho * thermal.min_specific_heat()
    )
    mu = hyper.mu + 2.0 * hyper.eta_a
    lame = hyper.kappa - 2.0 * hyper.mu / 3.0
    D = np.zeros((6, 6))
    D[:3, :3] = lame
    D[np.arange(3), np.arange(3)] += 2.0 * mu
    D[3:, 3:] = mu * np.eye(3)
    lam_mech = 0.0
    for lo in range(0, len(grad), 4096):
        B = _small_strain_B(grad[lo : lo + 4096])
        K = np.einsum("eki,kl,elj->eij", B, D, B)
        if pre.hourglass is not None and hourglass_stiffness > 0:
            hg = pre.hourglass[lo : lo + 4096]
            vol = pre.ref_volume[lo : lo + 4096]
            k = hourglass_scale(hourglass_stiffness, hyper.mu, vol) / vol
            Khg = np.einsum("e,eka,ekb->eab", k, hg, hg)
            K = K + np.einsum("eab,ij->eaibj", Khg, np.eye(3)).reshape(K.shape)
        lam_mech = max(lam_mech, float(np.linalg.eigvalsh(K)[:, -1].max()) * n / rho)
    return float(lam_th), lam_mech


def hourglass_scale(stiffness: float, mu: float, volume) -> np.ndarray:
    """Per-element hourglass spring constant ``stiffness * mu * V^(1/3) / 8`` (N/m)."""
    return stiffness * mu * np.cbrt(volume) / 8.0


def critical_timestep(
    mesh: Mesh,
    material,
    safety: float = 0.9,
    method: str = "element",
    pre: "PrecomputedMesh | None" = None,
    hourglass_stiffness: float = 0.0,
) -> tuple[float, float]:
    """Conservative ``(dt_thermal, dt_mechanical)`` for the explicit updates.

    ``method="element"`` (default) bounds the assembled spectrum by the element
    spectra: ``dt_thermal = 2/lambda_th`` (forward Euler) and
    ``dt_mechanical = 2/sqrt(lambda_mech)`` (central difference).

    ``method="edge"`` is the cheap wave-speed estimate with ``L`` the minimum
    element edge: ``L / c_d`` with ``c_d = sqrt((kappa + 4mu/3)/rho)``, and
    ``rho c L^2 / (2 k_max d)`` with ``d = 3``. It can exceed the true limit on
    tetrahedral meshes, so it is not used for validation.

    Both are multiplied by ``safety``.
    """
    if method == "edge":
        L = float(mesh.min_edge_lengths().min())
        hyper = material.hyperelastic
        rho = material.thermal.density
        c_d = math.sqrt((hyper.kappa + 4.0 * hyper.mu / 3.0) / rho)
        c = material.thermal.min_specific_heat()
        k = material.thermal.max_conductivity()
        return safety * rho * c * L * L / (2.0 * k * 3.0), safety * L / c_d
    if method != "element":
        raise ValueError(f"unknown critical time step method {method!r}")
    if pre is None:
        pre = precompute(mesh, material.thermal.density, material.thermal.min_specific_heat())
    lam_th, lam_mech = element_eigenvalue_bounds(pre, material, hourglass_stiffness)
    return safety * 2.0 / lam_th, safety * 2.0 / math.sqrt(lam_mech)


# ----------------------------------------------------------------------------
# structured generator


def box_mesh(size=(1.0, 1.0, 1.0), divisions=(1, 1, 1), kind="H8", origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Structured brick mesh of a box, as H8 or as six T4 per cell.

    Node sets ``xmin xmax ymin ymax zmin zmax boundary interior`` are defined.
    """
    nx, ny, nz = (int(d) for d in divisions)
    if min(nx, ny, nz) < 1:
        raise MeshError("box divisions must be >= 1")
    axes = [
        o + np.linspace(0.0, s, n + 1) for o, s, n in zip(origin, size, (nx, ny, nz))
    ]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    hexes = np.column_stack(
        [
            nid(i, j, k),
            nid(i + 1, j, k),
            nid(i + 1, j + 1, k),
            nid(i, j + 1, k),
            nid(i, j, k + 1),
            nid(i + 1, j, k + 1),
            nid(i + 1, j + 1, k + 1),
            nid(i, j + 1, k + 1),
        ]
    )
    if kind == "H8":
        elements = hexes
    elif kind == "T4":
        elements = hexes[:, H8_TO_T4].reshape(-1, 4)
        vols = _tet_volumes(nodes[elements])
        flip = vols < 0
        elements[flip] = elements[flip][:, [0, 2, 1, 3]]
    else:
        raise MeshError(f"unknown element kind {kind!r}")
    tol = 1e-9 * max(size)
    sets = {}
    for d, name in enumerate("xyz"):
        lo, hi = origin[d], origin[d] + size[d]
        sets[f"{name}min"] = np.nonzero(np.abs(nodes[:, d] - lo) < tol)[0]
        sets[f"{name}max"] = np.nonzero(np.abs(nodes[:, d] - hi) < tol)[0]
    on_boundary = np.zeros(len(nodes), dtype=bool)
    for ids in sets.values():
        on_boundary[ids] = True
    sets["boundary"] = np.nonzero(on_boundary)[0]
    sets["interior"] = np.nonzero(~on_boundary)[0]
    return Mesh(nodes=nodes, elements=elements, kind=kind, node_sets=sets)
