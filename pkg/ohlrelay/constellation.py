"""
LEO constellation snapshots and relay-path selection.

Satellites are identified by ``plane_index * sats_per_plane + slot_index``.
Positions are Earth-centred; inertial and Earth-fixed frames coincide at the
snapshot epoch.
"""

import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
from scipy.spatial.distance import pdist, squareform

from ohlrelay.channel import LinkGeometry
from ohlrelay.errors import (CorridorTooNarrowError, DomainError,
                             IntegrityError, NoRouteError)
from ohlrelay.numerics import RngStream
from ohlrelay.optimizer import OptimizerSettings, joint_optimize
from ohlrelay.relay_chain import NoiseBudget

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

OBJECTIVES = ("min_total_length", "min_e2e_pe")
SNAPSHOT_STREAM = 1
_RADIUS_RTOL = 1e-6

HopErrorModel = Callable[[float, str], float]


@dataclass(frozen=True)
class ConstellationConfig:
    """
    Walker-style constellation of circular inclined orbits.

    Args:
        num_planes (int): orbital planes, RAAN evenly spaced over 360 degrees.
        sats_per_plane (int): satellites per plane, evenly spaced in argument
            of latitude.
        altitude (float): orbit altitude, meters.
        inclination (float): degrees, in ``(0, 90]``.
        perturbation_max (float): half-width of the uniform in-plane offset,
            degrees.
        earth_radius (float): meters.
        seed (int): snapshot seed.
    """
    num_planes: int = 20
    sats_per_plane: int = 25
    altitude: float = 600e3
    inclination: float = 53.0
    perturbation_max: float = 1.0
    earth_radius: float = 6371e3
    seed: int = 0

    def __post_init__(self):
        if int(self.num_planes) < 1 or int(self.sats_per_plane) < 1:
            raise DomainError(f"Plane and slot counts must be >= 1, got {self.num_planes}, {self.sats_per_plane}.")
        if not 0 < self.inclination <= 90:
            raise DomainError(f"Inclination must lie in (0, 90] degrees, got {self.inclination}.")
        if not (self.altitude > 0 and self.earth_radius > 0):
            raise DomainError("Altitude and Earth radius must be positive.")
        if self.perturbation_max < 0:
            raise DomainError(f"perturbation_max must be >= 0, got {self.perturbation_max}.")
        object.__setattr__(self, "num_planes", int(self.num_planes))
        object.__setattr__(self, "sats_per_plane", int(self.sats_per_plane))

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.altitude


@dataclass(frozen=True)
class LinkLimits:
    """Feasibility limits and tracking accuracy assigned to each link class."""
    max_inter_orbit: float = 1e6
    max_intra_orbit: float = 2e6
    min_altitude_clearance: float = 100e3
    sigma_intra: float = 50e-6
    sigma_inter: float = 150e-6

    def sigma_for(self, link_class: str) -> float:
        return self.sigma_intra if link_class == "intra_orbit" else self.sigma_inter

    def max_length_for(self, link_class: str) -> float:
        return self.max_intra_orbit if link_class == "intra_orbit" else self.max_inter_orbit


@dataclass(frozen=True)
class GroundScenario:
    """Two ground stations ``separation`` meters apart along ``bearing`` degrees."""
    source_lat: float = 20.0
    source_lon: float = 0.0
    bearing: float = 90.0
    separation: float = 14125e3
    corridor_half_angle: float = 15.0


@dataclass
class ConstellationSnapshot:
    epoch_tag: str
    plane_index: np.ndarray
    slot_index: np.ndarray
    positions: np.ndarray
    earth_radius: float
    altitude: float

    def __post_init__(self):
        self.plane_index = np.asarray(self.plane_index, dtype=int)
        self.slot_index = np.asarray(self.slot_index, dtype=int)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if not len(self.plane_index) == len(self.slot_index) == len(self.positions):
            raise IntegrityError("Snapshot columns have different lengths.")
        radii = np.linalg.norm(self.positions, axis=1)
        expected = self.earth_radius + self.altitude
        if radii.size and np.max(np.abs(radii - expected)) > _RADIUS_RTOL * expected:
            raise IntegrityError(f"Satellite radii deviate from the circular orbit radius {expected} m.")

    def __len__(self):
        return len(self.positions)

    @property
    def satellites(self) -> List[Tuple[int, int, np.ndarray]]:
        return [(int(p), int(s), pos) for p, s, pos in zip(self.plane_index, self.slot_index, self.positions)]


@dataclass(frozen=True)
class LinkCandidate:
    from_id: int
    to_id: int
    length: float
    link_class: str
    sigma_theta_assigned: float

    def reversed(self) -> "LinkCandidate":
        return LinkCandidate(self.to_id, self.from_id, self.length, self.link_class, self.sigma_theta_assigned)

    def geometry(self, aperture_radius: float, wavelength: float = 1550e-9) -> LinkGeometry:
        return LinkGeometry(length_L=self.length,
                            jitter_sigma_theta=self.sigma_theta_assigned,
                            aperture_radius_ra=aperture_radius,
                            wavelength_lambda=wavelength,
                            link_class=self.link_class)


@dataclass
class RoutePath:
    node_sequence: List[int]
    links: List[LinkCandidate]
    total_length: float = 0.0
    relay_count: int = 0
    objective: str = "min_total_length"
    metadata: Dict = field(default_factory=dict)

    def link_geometries(self, aperture_radius: float, wavelength: float = 1550e-9) -> List[LinkGeometry]:
        return [link.geometry(aperture_radius, wavelength) for link in self.links]


def _orbit_positions(radius: float, raan: np.ndarray, arg_lat: np.ndarray, inclination: float) -> np.ndarray:
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    cos_u, sin_u = np.cos(arg_lat), np.sin(arg_lat)
    cos_i, sin_i = math.cos(inclination), math.sin(inclination)
    return radius * np.column_stack([
        cos_o * cos_u - sin_o * sin_u * cos_i,
        sin_o * cos_u + cos_o * sin_u * cos_i,
        sin_u * sin_i,
    ])


def generate_snapshot(cfg: ConstellationConfig,
                      rng: RngStream,
                      epoch_tag: Optional[str] = None) -> ConstellationSnapshot:
    """
    Place every satellite of ``cfg`` on its orbit at one instant.

    Args:
        cfg (ConstellationConfig): constellation geometry.
        rng (RngStream): source of the in-plane offsets.
        epoch_tag (str): snapshot label; derived from ``rng`` when omitted.

    Returns:
        ConstellationSnapshot: ``num_planes * sats_per_plane`` satellites.
    """
    planes, slots = np.divmod(np.arange(cfg.num_planes * cfg.sats_per_plane), cfg.sats_per_plane)
    offsets = rng.generator.uniform(-cfg.perturbation_max, cfg.perturbation_max, size=planes.size)
    raan = np.deg2rad(360.0 * planes / cfg.num_planes)
    arg_lat = np.deg2rad(360.0 * slots / cfg.sats_per_plane + offsets)
    positions = _orbit_positions(cfg.orbit_radius, raan, arg_lat, math.radians(cfg.inclination))
    tag = epoch_tag or f"seed{rng.seed}-stream{rng.stream_id}" + "".join(f"-{p}" for p in rng.path)
    return ConstellationSnapshot(epoch_tag=tag,
                                 plane_index=planes,
                                 slot_index=slots,
                                 positions=positions,
                                 earth_radius=cfg.earth_radius,
                                 altitude=cfg.altitude)


def _segment_clearance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # closest approach of the segments a-b to the Earth's centre
    d = b - a
    t = np.clip(-np.einsum("ij,ij->i", a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    return np.linalg.norm(a + t[:, None] * d, axis=1)


def feasible_links(snap: ConstellationSnapshot, limits: LinkLimits = None) -> List[LinkCandidate]:
    """
    Satellite pairs within their class length limit and in line of sight.

    Args:
        snap (ConstellationSnapshot): satellites.
        limits (LinkLimits): class length limits, Earth clearance and the
            tracking accuracy assigned per class.

    Returns:
        List[LinkCandidate]: with ``from_id < to_id``.
    """
    limits = limits or LinkLimits()
    if len(snap) == 0:
        raise DomainError("Snapshot has no satellites.")
    distances = squareform(pdist(snap.positions))
    i, j = np.triu_indices(len(snap), k=1)
    lengths = distances[i, j]
    intra = snap.plane_index[i] == snap.plane_index[j]
    within = np.where(intra, lengths <= limits.max_intra_orbit, lengths <= limits.max_inter_orbit)
    i, j, lengths, intra = i[within], j[within], lengths[within], intra[within]
    clear = _segment_clearance(snap.positions[i], snap.positions[j]) > snap.earth_radius + limits.min_altitude_clearance
    links = []
    for a, b, length, same_plane in zip(i[clear], j[clear], lengths[clear], intra[clear]):
        link_class = "intra_orbit" if same_plane else "inter_orbit"
        links.append(LinkCandidate(int(a), int(b), float(length), link_class, limits.sigma_for(link_class)))
    logger.debug("%i feasible links among %i satellites.", len(links), len(snap))
    return links


def build_link_graph(snap: ConstellationSnapshot, links: Iterable[LinkCandidate]) -> nx.Graph:
    graph = nx.Graph()
    for sat_id, (plane, slot) in enumerate(zip(snap.plane_index, snap.slot_index)):
        graph.add_node(sat_id, plane_index=int(plane), slot_index=int(slot))
    for link in links:
        graph.add_edge(link.from_id,
                       link.to_id,
                       length_m=link.length,
                       link_class=link.link_class,
                       sigma_theta_rad=link.sigma_theta_assigned,
                       candidate=link)
    return graph


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), np.sum(u * v, axis=-1))


def filter_candidates(snap: ConstellationSnapshot,
                      source_pos: Sequence[float],
                      dest_pos: Sequence[float],
                      corridor_half_angle: float = 15.0) -> Set[int]:
    """
    Satellites whose direction lies within ``corridor_half_angle`` degrees of
    the great-circle arc from ``source_pos`` to ``dest_pos``.

    Raises:
        CorridorTooNarrowError: when no satellite qualifies.
    """
    a = _unit(np.asarray(source_pos, dtype=float))
    b = _unit(np.asarray(dest_pos, dtype=float))
    p = _unit(snap.positions)
    to_ends = np.minimum(_angle(p, a), _angle(p, b))
    normal = np.cross(a, b)
    if np.linalg.norm(normal) > 1e-12:
        normal = _unit(normal)
        cross_track = np.arcsin(np.clip(p @ normal, -1.0, 1.0))
        projected = p - np.outer(p @ normal, normal)
        norms = np.linalg.norm(projected, axis=1)
        on_arc = np.zeros(len(p), dtype=bool)
        ok = norms > 1e-12
        projected[ok] /= norms[ok, None]
        arc = _angle(a, b)
        on_arc[ok] = np.abs(_angle(projected[ok], a) + _angle(projected[ok], b) - arc) < 1e-9
        distance = np.where(on_arc, np.abs(cross_track), to_ends)
    else:
        distance = to_ends
    selected = set(np.flatnonzero(distance <= math.radians(corridor_half_angle)).tolist())
    if not selected:
        raise CorridorTooNarrowError(
            f"No satellite within {corridor_half_angle} degrees of the route corridor; widen the corridor.")
    return selected


def nearest_satellite(snap: ConstellationSnapshot, ground_point_ecef: Sequence[float]) -> int:
    """Satellite closest to a ground point; ties go to the lowest id."""
    if len(snap) == 0:
        raise DomainError("Snapshot has no satellites.")
    distances = np.linalg.norm(snap.positions - np.asarray(ground_point_ecef, dtype=float), axis=1)
    return int(np.argmin(distances))


def ground_point(lat: float, lon: float, earth_radius: float = 6371e3) -> np.ndarray:
    """Earth-fixed position of a point on the spherical Earth, meters."""
    phi, lam = math.radians(lat), math.radians(lon)
    return earth_radius * np.array([math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi)])


def destination_point(lat: float, lon: float, distance: float, bearing: float,
                      earth_radius: float = 6371e3) -> Tuple[float, float]:
    """Latitude and longitude reached after ``distance`` meters along ``bearing`` degrees."""
    phi1, lam1, theta = math.radians(lat), math.radians(lon), math.radians(bearing)
    delta = distance / earth_radius
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    lon2 = (math.degrees(lam2) + 540.0) % 360.0 - 180.0
    return math.degrees(phi2), lon2


def _path_links(graph: nx.Graph, nodes: Sequence[int]) -> List[LinkCandidate]:
    links = []
    for a, b in zip(nodes[:-1], nodes[1:]):
        link = graph.edges[a, b]["candidate"]
        links.append(link if link.from_id == a else link.reversed())
    return links


def route(snap: ConstellationSnapshot,
          candidates: Optional[Iterable[int]],
          src_id: int,
          dst_id: int,
          objective: str = "min_total_length",
          graph: Optional[nx.Graph] = None,
          hop_error: Optional[HopErrorModel] = None,
          limits: LinkLimits = None) -> RoutePath:
    """
    Shortest relay path between two satellites.

    Args:
        snap (ConstellationSnapshot): satellites.
        candidates (Iterable[int]): allowed satellites; ``None`` allows all.
        src_id (int): first satellite of the path.
        dst_id (int): last satellite of the path.
        objective (str): ``min_total_length`` sums link lengths;
            ``min_e2e_pe`` sums ``-log(1 - pe_hop)`` with ``pe_hop`` from
            ``hop_error(length, link_class)``.
        graph (nx.Graph): prebuilt link graph; built from
            :func:`feasible_links` when omitted.
        hop_error (Callable): required for ``min_e2e_pe``.
        limits (LinkLimits): used only when the graph is built here.

    Returns:
        RoutePath: nodes, oriented links, total length and relay count.

    Raises:
        NoRouteError: when ``dst_id`` is unreachable; carries the reachable
            frontier.
    """
    if objective not in OBJECTIVES:
        raise DomainError(f"Unknown objective {objective}; expected one of {OBJECTIVES}.")
    if objective == "min_e2e_pe" and hop_error is None:
        raise DomainError("The min_e2e_pe objective needs a hop error model.")
    if graph is None:
        graph = build_link_graph(snap, feasible_links(snap, limits))
    allowed = set(graph.nodes) if candidates is None else set(candidates)
    for sat_id in (src_id, dst_id):
        if sat_id not in allowed:
            raise DomainError(f"Satellite {sat_id} is not among the routing candidates.")
    if src_id == dst_id:
        return RoutePath(node_sequence=[src_id], links=[], total_length=0.0, relay_count=0, objective=objective)

    sub = graph.subgraph(allowed)
    if objective == "min_total_length":
        weight = "length_m"
    else:

        def weight(u, v, attrs):
            pe = hop_error(attrs["length_m"], attrs["link_class"])
            return -math.log1p(-min(pe, 1.0 - 1e-16))

    try:
        nodes = nx.dijkstra_path(sub, src_id, dst_id, weight=weight)
    except nx.NetworkXNoPath as err:
        frontier = sorted(nx.node_connected_component(sub, src_id))
        raise NoRouteError(f"Satellite {dst_id} is unreachable from {src_id}.", frontier=frontier) from err
    links = _path_links(graph, nodes)
    return RoutePath(node_sequence=list(nodes),
                     links=links,
                     total_length=float(sum(link.length for link in links)),
                     relay_count=max(len(links) - 1, 0),
                     objective=objective)


def validate_route(snap: ConstellationSnapshot, path: RoutePath, limits: LinkLimits = None) -> None:
    """
    Re-check a route against the snapshot geometry.

    Recomputes every link from satellite positions rather than trusting the
    stored candidates.

    Raises:
        IntegrityError: on the first violated constraint.
    """
    limits = limits or LinkLimits()
    nodes = path.node_sequence
    if len(path.links) != max(len(nodes) - 1, 0):
        raise IntegrityError(f"Route has {len(nodes)} nodes but {len(path.links)} links.")
    total = 0.0
    for k, link in enumerate(path.links):
        if (link.from_id, link.to_id) != (nodes[k], nodes[k + 1]):
            raise IntegrityError(f"Link {k} ({link.from_id}->{link.to_id}) breaks the node sequence.")
        for sat_id in (link.from_id, link.to_id):
            if not 0 <= sat_id < len(snap):
                raise IntegrityError(f"Unknown satellite id {sat_id}.")
        a, b = snap.positions[link.from_id], snap.positions[link.to_id]
        length = float(np.linalg.norm(b - a))
        if not math.isclose(length, link.length, rel_tol=1e-9):
            raise IntegrityError(f"Link {k} length {link.length} m disagrees with the geometry ({length} m).")
        same_plane = snap.plane_index[link.from_id] == snap.plane_index[link.to_id]
        expected_class = "intra_orbit" if same_plane else "inter_orbit"
        if link.link_class != expected_class:
            raise IntegrityError(f"Link {k} is labelled {link.link_class} but joins {expected_class} satellites.")
        if length > limits.max_length_for(expected_class):
            raise IntegrityError(f"Link {k} of {length:.0f} m exceeds the {expected_class} limit.")
        clearance = float(_segment_clearance(a[None, :], b[None, :])[0])
        if clearance <= snap.earth_radius + limits.min_altitude_clearance:
            raise IntegrityError(f"Link {k} passes {clearance - snap.earth_radius:.0f} m above the surface.")
        total += length
    if not math.isclose(total, path.total_length, rel_tol=1e-9, abs_tol=1e-6):
        raise IntegrityError(f"Route total {path.total_length} m differs from the link sum {total} m.")
    if path.relay_count != max(len(path.links) - 1, 0):
        raise IntegrityError(f"Route relay count {path.relay_count} does not match its {len(path.links)} links.")


def save_snapshot(snap: ConstellationSnapshot, path: str, seed: Optional[int] = None,
                  config_sha256: Optional[str] = None) -> None:
    document = {
        "epoch_tag": snap.epoch_tag,
        "earth_radius_m": snap.earth_radius,
        "altitude_m": snap.altitude,
        "seed": seed,
        "config_sha256": config_sha256,
        "satellites": [{
            "id": k,
            "plane_index": plane,
            "slot_index": slot,
            "position_m": [float(x) for x in pos],
        } for k, (plane, slot, pos) in enumerate(snap.satellites)],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=4, sort_keys=True)


def load_snapshot(path: str) -> ConstellationSnapshot:
    """
    Read a snapshot document written by :func:`save_snapshot`.

    Raises:
        IntegrityError: malformed document, ids out of order or satellites
            off their orbit radius.
    """
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)
    try:
        satellites = document["satellites"]
        if [s["id"] for s in satellites] != list(range(len(satellites))):
            raise IntegrityError(f"Satellite ids in {path} are not consecutive from zero.")
        return ConstellationSnapshot(epoch_tag=document["epoch_tag"],
                                     plane_index=[s["plane_index"] for s in satellites],
                                     slot_index=[s["slot_index"] for s in satellites],
                                     positions=[s["position_m"] for s in satellites],
                                     earth_radius=float(document["earth_radius_m"]),
                                     altitude=float(document["altitude_m"]))
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, IntegrityError):
            raise
        raise IntegrityError(f"Malformed snapshot document {path}: {err!r}") from err


def save_route(path_obj: RoutePath, path: str, epoch_tag: Optional[str] = None,
               config_sha256: Optional[str] = None) -> None:
    document = {
        "epoch_tag": epoch_tag,
        "config_sha256": config_sha256,
        "objective": path_obj.objective,
        "node_sequence": [int(n) for n in path_obj.node_sequence],
        "total_length_m": path_obj.total_length,
        "relay_count": path_obj.relay_count,
        "metadata": path_obj.metadata,
        "links": [{
            "from_id": link.from_id,
            "to_id": link.to_id,
            "length_m": link.length,
            "link_class": link.link_class,
            "sigma_theta_rad": link.sigma_theta_assigned,
        } for link in path_obj.links],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=4, sort_keys=True)


def load_route(path: str, snapshot: Optional[ConstellationSnapshot] = None,
               limits: LinkLimits = None) -> RoutePath:
    """Read a route document; re-validated against ``snapshot`` when given."""
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)
    try:
        links = [
            LinkCandidate(int(link["from_id"]), int(link["to_id"]), float(link["length_m"]), link["link_class"],
                          float(link["sigma_theta_rad"])) for link in document["links"]
        ]
        result = RoutePath(node_sequence=[int(n) for n in document["node_sequence"]],
                           links=links,
                           total_length=float(document["total_length_m"]),
                           relay_count=int(document["relay_count"]),
                           objective=document.get("objective", "min_total_length"),
                           metadata=document.get("metadata") or {})
    except (KeyError, TypeError, ValueError) as err:
        raise IntegrityError(f"Malformed route document {path}: {err!r}") from err
    if snapshot is not None:
        if document.get("epoch_tag") not in (None, snapshot.epoch_tag):
            raise IntegrityError(
                f"Route {path} belongs to snapshot {document['epoch_tag']}, not {snapshot.epoch_tag}.")
        validate_route(snapshot, result, limits)
    return result


def scenario_route(cfg: ConstellationConfig,
                   scenario: GroundScenario = None,
                   limits: LinkLimits = None,
                   snapshot_index: int = 0,
                   objective: str = "min_total_length",
                   hop_error: Optional[HopErrorModel] = None) -> Tuple[ConstellationSnapshot, RoutePath]:
    """
    Relay path between two ground stations on one constellation snapshot.

    Generates snapshot ``snapshot_index``, picks the satellites nearest to
    each ground station, keeps the satellites inside the corridor between
    them and routes over the remaining feasible links. If the corridor cuts
    the path, the whole constellation is used instead.
    """
    scenario = scenario or GroundScenario()
    rng = RngStream(cfg.seed, stream_id=SNAPSHOT_STREAM).child(snapshot_index)
    snap = generate_snapshot(cfg, rng, epoch_tag=f"seed{cfg.seed}-snapshot{snapshot_index}")
    dest_lat, dest_lon = destination_point(scenario.source_lat, scenario.source_lon, scenario.separation,
                                           scenario.bearing, cfg.earth_radius)
    src_id = nearest_satellite(snap, ground_point(scenario.source_lat, scenario.source_lon, cfg.earth_radius))
    dst_id = nearest_satellite(snap, ground_point(dest_lat, dest_lon, cfg.earth_radius))

    graph = build_link_graph(snap, feasible_links(snap, limits))
    try:
        corridor = filter_candidates(snap, snap.positions[src_id], snap.positions[dst_id],
                                     scenario.corridor_half_angle)
        corridor |= {src_id, dst_id}
        path = route(snap, corridor, src_id, dst_id, objective, graph=graph, hop_error=hop_error)
        path.metadata["corridor_size"] = len(corridor)
    except (CorridorTooNarrowError, NoRouteError) as err:
        warnings.warn(f"Corridor routing failed ({err}); routing over the full constellation.", RuntimeWarning)
        path = route(snap, None, src_id, dst_id, objective, graph=graph, hop_error=hop_error)
        path.metadata["corridor_size"] = len(snap)
    path.metadata.update({"source_id": src_id, "destination_id": dst_id, "snapshot_index": snapshot_index})
    validate_route(snap, path, limits)
    logger.debug("Snapshot %s: %i links, %.0f km.", snap.epoch_tag, len(path.links), path.total_length / 1e3)
    return snap, path


class HopErrorTable:
    """
    Optimized hop error as a function of link length, per link class.

    Tabulates the joint optimum on a length grid and interpolates the log of
    the error probability, so routing does not optimize every edge.
    """
    def __init__(self, lengths: Dict[str, np.ndarray], log_errors: Dict[str, np.ndarray]):
        self.lengths = {k: np.asarray(v, dtype=float) for k, v in lengths.items()}
        self.log_errors = {k: np.asarray(v, dtype=float) for k, v in log_errors.items()}

    def __call__(self, length: float, link_class: str) -> float:
        return float(np.exp(np.interp(length, self.lengths[link_class], self.log_errors[link_class])))

    @classmethod
    def from_optimizer(cls, noise: NoiseBudget, tx_power: float, aperture_radius: float, limits: LinkLimits = None,
                       wavelength: float = 1550e-9, points: int = 12, min_length: float = 200e3,
                       settings: OptimizerSettings = None) -> "HopErrorTable":
        limits = limits or LinkLimits()
        lengths, log_errors = {}, {}
        for link_class in ("intra_orbit", "inter_orbit"):
            grid = np.linspace(min_length, limits.max_length_for(link_class), points)
            values = []
            for length in grid:
                geom = LinkGeometry(length, limits.sigma_for(link_class), aperture_radius, wavelength, link_class)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    pe = joint_optimize(geom, noise, tx_power, settings).achieved_pe
                values.append(math.log(max(pe, 1e-300)))
            lengths[link_class], log_errors[link_class] = grid, np.array(values)
        return cls(lengths, log_errors)
