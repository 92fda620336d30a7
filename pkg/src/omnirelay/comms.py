"""Directional-antenna link budget for the relay.

The relay carries two body-fixed antennas, one facing the base station and one
facing the maneuvering UAV. Everything here is a pure function of its inputs.
Public quantities are in dB/dBm except where a function says linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quaternion as quat
from .errors import DegenerateGeometryError, InvalidInputError

SPEED_OF_LIGHT = 299_792_458.0

BS_LINK = 0
UAV2_LINK = 1


def db_to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    lin = np.asarray(lin, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(lin)


@dataclass(frozen=True, eq=False)
class AntennaSpec:
    boresight_body: np.ndarray
    peak_gain_db: float
    half_power_beamwidth: float
    floor_gain_db: float

    def __post_init__(self):
        b = np.array(self.boresight_body, dtype=float)
        if b.shape != (3,):
            raise InvalidInputError("boresight_body must be a 3-vector")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise InvalidInputError(f"boresight_body must be unit norm, got {np.linalg.norm(b)!r}")
        if not 0.0 < self.half_power_beamwidth < math.pi / 2:
            raise InvalidInputError("half_power_beamwidth must lie in (0, pi/2)")
        if not self.floor_gain_db < self.peak_gain_db:
            raise InvalidInputError("floor_gain_db must be below peak_gain_db")
        b.setflags(write=False)
        object.__setattr__(self, "boresight_body", b)
        object.__setattr__(self, "peak_gain_db", float(self.peak_gain_db))
        object.__setattr__(self, "half_power_beamwidth", float(self.half_power_beamwidth))
        object.__setattr__(self, "floor_gain_db", float(self.floor_gain_db))

    @property
    def pattern_exponent(self) -> float:
        """Exponent of the cos^n main lobe that puts half power at HPBW/2."""
        return math.log(0.5) / math.log(math.cos(0.5 * self.half_power_beamwidth))

    def to_dict(self) -> dict:
        return {
            "boresight_body": self.boresight_body.tolist(),
            "peak_gain_db": self.peak_gain_db,
            "half_power_beamwidth": self.half_power_beamwidth,
            "floor_gain_db": self.floor_gain_db,
        }


@dataclass(frozen=True, eq=False)
class CommParams:
    """Link-budget constants and the pointing tolerance.

    ``relay_antennas`` and ``peer_antennas`` are ordered (base station link,
    UAV-2 link). Peers are assumed to steer their antenna at the relay, so only
    their pattern peak matters in the budget.
    """

    tx_power_dbm: float
    carrier_frequency_hz: float
    noise_power_dbm: float
    max_misalignment: float
    relay_antennas: tuple
    peer_antennas: tuple
    min_snr_db: float | None = None

    def __post_init__(self):
        if not self.carrier_frequency_hz > 0:
            raise InvalidInputError("carrier_frequency_hz must be positive")
        if not 0.0 < self.max_misalignment <= math.pi / 2:
            raise InvalidInputError("max_misalignment must lie in (0, pi/2]")
        if len(self.relay_antennas) != 2 or len(self.peer_antennas) != 2:
            raise InvalidInputError("relay_antennas and peer_antennas need one entry per link")
        object.__setattr__(self, "relay_antennas", tuple(self.relay_antennas))
        object.__setattr__(self, "peer_antennas", tuple(self.peer_antennas))

    @property
    def n_margins(self) -> int:
        return 2 if self.min_snr_db is None else 3

    def to_dict(self) -> dict:
        return {
            "tx_power_dbm": self.tx_power_dbm,
            "carrier_frequency_hz": self.carrier_frequency_hz,
            "noise_power_dbm": self.noise_power_dbm,
            "max_misalignment": self.max_misalignment,
            "min_snr_db": self.min_snr_db,
            "relay_antennas": {
                "bs": self.relay_antennas[BS_LINK].to_dict(),
                "uav2": self.relay_antennas[UAV2_LINK].to_dict(),
            },
            "peer_antennas": {
                "bs": self.peer_antennas[BS_LINK].to_dict(),
                "uav2": self.peer_antennas[UAV2_LINK].to_dict(),
            },
        }


def default_comm_params(max_misalignment_deg: float = 15.0) -> CommParams:
    """2.4 GHz budget with a rear antenna canted 20° down and a forward antenna."""
    down = math.radians(20.0)
    relay_bs = AntennaSpec(
        np.array([-math.cos(down), 0.0, -math.sin(down)]), 10.0, math.radians(30.0), -10.0
    )
    relay_uav2 = AntennaSpec(np.array([1.0, 0.0, 0.0]), 10.0, math.radians(30.0), -10.0)
    peer = AntennaSpec(np.array([1.0, 0.0, 0.0]), 6.0, math.radians(60.0), -10.0)
    return CommParams(
        tx_power_dbm=20.0,
        carrier_frequency_hz=2.4e9,
        noise_power_dbm=-90.0,
        max_misalignment=math.radians(max_misalignment_deg),
        relay_antennas=(relay_bs, relay_uav2),
        peer_antennas=(peer, peer),
    )


@dataclass(frozen=True)
class LinkSample:
    misalignment_tx: float
    misalignment_rx: float
    distance: float
    snr_db: float
    rate_bps_hz: float


def pointing(attitude, boresight_body, own_position, target_position):
    """Vectorized (cos θ, θ, distance) between a rotated boresight and a line of sight.

    No validation; callers guarantee distinct positions. The angle uses
    ``atan2(|b×l|, b·l)``, which equals ``arccos(b·l)`` but stays accurate
    near 0 and π.
    """
    b = quat.rotate(attitude, boresight_body)
    los = np.asarray(target_position, dtype=float) - np.asarray(own_position, dtype=float)
    dist = np.linalg.norm(los, axis=-1)
    u = los / dist[..., None]
    cos_t = np.sum(b * u, axis=-1)
    sin_t = np.linalg.norm(np.cross(b, u), axis=-1)
    return cos_t, np.arctan2(sin_t, cos_t), dist


def _check_geometry(own, target):
    own = np.asarray(own, dtype=float)
    target = np.asarray(target, dtype=float)
    if own.shape != (3,) or target.shape != (3,):
        raise InvalidInputError("positions must be 3-vectors")
    if not np.linalg.norm(target - own) > 0:
        raise DegenerateGeometryError("own and target positions coincide")
    return own, target


def misalignment(attitude, antenna: AntennaSpec, own_position, target_position) -> float:
    """Angle between the antenna boresight (world frame) and the line of sight, in [0, π]."""
    own, target = _check_geometry(own_position, target_position)
    _, theta, _ = pointing(attitude, antenna.boresight_body, own, target)
    return float(theta)


def antenna_gain(antenna: AntennaSpec, misalignment_angle):
    """Linear gain of a cos^n main lobe with a flat floor beyond 90°."""
    theta = np.asarray(misalignment_angle, dtype=float)
    g0 = 10.0 ** (antenna.peak_gain_db / 10.0)
    floor = 10.0 ** (antenna.floor_gain_db / 10.0)
    c = np.clip(np.cos(theta), 0.0, None)
    main = g0 * np.power(c, antenna.pattern_exponent)
    g = np.where(theta < math.pi / 2, np.maximum(main, floor), floor)
    return float(g) if g.ndim == 0 else g


def antenna_gain_db(antenna: AntennaSpec, misalignment_angle):
    return linear_to_db(antenna_gain(antenna, misalignment_angle))


def free_space_path_loss(distance, frequency) -> float:
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)) or not frequency > 0:
        raise InvalidInputError("distance and frequency must be positive")
    out = 20.0 * np.log10(4.0 * math.pi * d * frequency / SPEED_OF_LIGHT)
    return float(out) if out.ndim == 0 else out


def link_snr(comm: CommParams, tx_gain_db, rx_gain_db, distance):
    return (
        comm.tx_power_dbm + tx_gain_db + rx_gain_db
        - free_space_path_loss(distance, comm.carrier_frequency_hz)
        - comm.noise_power_dbm
    )


def end_to_end_rate(snr1_db, snr2_db):
    """Decode-and-forward spectral efficiency: the weaker hop sets the rate."""
    r1 = np.log2(1.0 + db_to_linear(snr1_db))
    r2 = np.log2(1.0 + db_to_linear(snr2_db))
    out = np.minimum(r1, r2)
    return float(out) if out.ndim == 0 else out


def _relay_geometry(state, comm: CommParams, bs_position, uav2_position):
    own = state.position
    _check_geometry(own, bs_position)
    _check_geometry(own, uav2_position)
    targets = (np.asarray(bs_position, dtype=float), np.asarray(uav2_position, dtype=float))
    return [
        pointing(state.attitude, ant.boresight_body, own, tgt)
        for ant, tgt in zip(comm.relay_antennas, targets)
    ]


def _link_snrs(comm: CommParams, thetas, dists):
    snrs = []
    for link, (theta, d) in enumerate(zip(thetas, dists)):
        tx = antenna_gain_db(comm.relay_antennas[link], theta)
        rx = comm.peer_antennas[link].peak_gain_db
        snrs.append(link_snr(comm, tx, rx, d))
    return snrs


def alignment_margins(state, comm: CommParams, bs_position, uav2_position) -> np.ndarray:
    """``cos θ_i − cos θ_max`` per link; positive iff the peer sits inside the cone.

    With ``comm.min_snr_db`` set, the weaker link's SNR excess is appended.
    """
    geo = _relay_geometry(state, comm, bs_position, uav2_position)
    cmax = math.cos(comm.max_misalignment)
    margins = [float(g[0]) - cmax for g in geo]
    if comm.min_snr_db is not None:
        snrs = _link_snrs(comm, [g[1] for g in geo], [g[2] for g in geo])
        margins.append(float(min(snrs)) - comm.min_snr_db)
    return np.array(margins)


def output_map(state, comm: CommParams, bs_position, uav2_position) -> np.ndarray:
    """Tracked outputs ``[px, py, pz, θ_bs, θ_uav2]``."""
    geo = _relay_geometry(state, comm, bs_position, uav2_position)
    return np.concatenate([state.position, [float(geo[0][1]), float(geo[1][1])]])


def link_samples(state, comm: CommParams, bs_position, uav2_position):
    """Per-link budget records plus the end-to-end rate.

    Link order is (relay↔BS, relay↔UAV-2); ``misalignment_tx`` is the relay's
    antenna and ``misalignment_rx`` the peer's, which tracks the relay.
    """
    geo = _relay_geometry(state, comm, bs_position, uav2_position)
    thetas = [float(g[1]) for g in geo]
    dists = [float(g[2]) for g in geo]
    snrs = [float(s) for s in _link_snrs(comm, thetas, dists)]
    samples = tuple(
        LinkSample(thetas[i], 0.0, dists[i], snrs[i], float(np.log2(1.0 + db_to_linear(snrs[i]))))
        for i in range(2)
    )
    return samples, end_to_end_rate(snrs[0], snrs[1])
