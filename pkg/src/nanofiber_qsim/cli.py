"""Batch command line: ``nanofiber-qsim <command> [options]``.

Commands write machine-readable tables to ``--out`` (default ``out/``):

    modes        guided-mode intensities on a grid and a radial line
    magic        magic detunings and chi_J3 versus quantization-axis angle
    squeeze      moment trajectory and squeezing at one axis
    sweep        optimal-axis peak squeezing over trap radius and atom number
    atom-number  atom-number resolution of an H/V phase probe

Configuration is a JSON file merged over built-in defaults; ``--set
key.path=value`` overrides individual entries (flags > file > defaults).
Every CSV starts with a ``# schema: nanofiber-qsim/<table>/v1`` line and
uses 12 significant digits.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 file-system failure.
"""

import argparse
import copy
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .atomic_structure import QuantizationAxis, load_system
from .errors import NanofiberError
from .fiber_modes import FiberSpec, local_modes, mode_profile, solve_he11
from .squeezing_dynamics import (
    MIN_R_OVER_A,
    OBSERVABLE_DB,
    RateSet,
    TrapSite,
    atom_number_resolution,
    coherent_state,
    evaluate_axis,
    integrate_moments,
    coupling_set,
    magic_detunings,
    optimize_axis,
    sphere_scan,
    sweep,
    variance_decomposition,
)

SCHEMA_PREFIX = "# schema: nanofiber-qsim/"
SCHEMA_VERSION = "v1"

DEFAULTS = {
    "fiber": {"radius_nm": 225.0, "n1": 1.4469, "n2": 1.0},
    "atomic_data": "D1",
    "trap": {"r_over_a": 1.8, "sites_deg": [0.0, 180.0], "N_0": 1250, "N_pi": 1250,
             "allow_close": False},
    "probe": {"branch": 4, "photon_flux": 1.0e8, "input_polarization": "diagonal",
              "rates": "incoherent"},
    "axis": {"mode": "optimize", "phi_deg": 86.0, "grid_deg": 2.0, "refine": True},
    "integration": {"T": None, "T_max": 5.0, "dt": 2.0e-4, "noise": "off", "seed": 0,
                    "decoherence": True},
    "output": {"format": "csv", "path": "out", "stride": 10},
    "modes": {"grid_half_width_nm": 900.0, "grid_points": 61, "radial_points": 200,
              "radial_max_over_a": 4.0},
    "magic": {"phi_step_deg": 2.0},
    "sweep": {"r_over_a": [1.5, 1.8, 2.0, 2.2, 2.3, 2.4, 2.5], "N_A": [500, 1000, 2500],
              "grid_deg": 2.0, "refine": False, "threshold_db": OBSERVABLE_DB,
              "full_sphere": False, "sphere_grid_deg": 10.0},
    "atom_number": {"atomic_data": "D2", "r_over_a": 1.8, "probe_MHz": 1000.0},
}


class ConfigError(Exception):
    """Configuration failed validation; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError([f"--set expects key=value, got {assignment!r}"])
    key, value = assignment.split("=", 1)
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError([f"{key}: unknown section {p!r}"])
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError([f"{key}: unknown key"])
    node[parts[-1]] = _parse_value(value)


def _number(cfg, path, errors, positive=False, integer=False, allow_none=False):
    node = cfg
    for p in path.split("."):
        node = node[p]
    if node is None and allow_none:
        return
    ok = isinstance(node, (int, float)) and not isinstance(node, bool) and math.isfinite(node)
    if ok and integer:
        ok = float(node).is_integer()
    if ok and positive:
        ok = node > 0
    if not ok:
        kind = "positive " if positive else ""
        kind += "integer" if integer else "number"
        errors.append(f"{path}: expected a {kind}, got {node!r}")


def validate(cfg):
    """Collect every configuration problem before any computation starts."""
    errors = []
    for p in ("fiber.radius_nm", "fiber.n1", "fiber.n2"):
        _number(cfg, p, errors, positive=True)
    f = cfg["fiber"]
    if not errors and not (f["n1"] > f["n2"] >= 1.0):
        errors.append("fiber.n1/fiber.n2: need n1 > n2 >= 1")
    _number(cfg, "trap.r_over_a", errors, positive=True)
    ra = cfg["trap"]["r_over_a"]
    if isinstance(ra, (int, float)):
        if ra <= 1.0:
            errors.append(f"trap.r_over_a: {ra} places the atoms inside the fiber (need > 1)")
        elif ra < MIN_R_OVER_A and not cfg["trap"]["allow_close"]:
            errors.append(f"trap.r_over_a: {ra} is below the model validity bound {MIN_R_OVER_A}"
                          " (set trap.allow_close=true to override)")
    for p in ("trap.N_0", "trap.N_pi"):
        _number(cfg, p, errors, integer=True)
    if all(isinstance(cfg["trap"][k], (int, float)) for k in ("N_0", "N_pi")):
        if cfg["trap"]["N_0"] < 0 or cfg["trap"]["N_pi"] < 0 or cfg["trap"]["N_0"] + cfg["trap"]["N_pi"] < 1:
            errors.append("trap.N_0/trap.N_pi: need non-negative counts with at least one atom")
    if cfg["probe"]["branch"] not in (3, 4):
        errors.append(f"probe.branch: expected 3 or 4, got {cfg['probe']['branch']!r}")
    _number(cfg, "probe.photon_flux", errors, positive=True)
    if cfg["probe"]["input_polarization"] not in ("diagonal", "H", "V"):
        errors.append("probe.input_polarization: expected diagonal, H or V")
    if cfg["probe"]["rates"] not in ("incoherent", "coherent"):
        errors.append("probe.rates: expected incoherent or coherent")
    if cfg["axis"]["mode"] not in ("optimize", "fixed"):
        errors.append("axis.mode: expected optimize or fixed")
    _number(cfg, "axis.phi_deg", errors)
    _number(cfg, "axis.grid_deg", errors, positive=True)
    _number(cfg, "integration.T", errors, positive=True, allow_none=True)
    _number(cfg, "integration.T_max", errors, positive=True)
    _number(cfg, "integration.dt", errors, positive=True)
    _number(cfg, "integration.seed", errors, integer=True)
    if cfg["integration"]["noise"] not in ("off", "on"):
        errors.append("integration.noise: expected off or on")
    _number(cfg, "output.stride", errors, positive=True, integer=True)
    if cfg["output"]["format"] not in ("csv", "json"):
        errors.append("output.format: expected csv or json")
    _number(cfg, "modes.grid_points", errors, positive=True, integer=True)
    _number(cfg, "modes.radial_points", errors, positive=True, integer=True)
    _number(cfg, "modes.grid_half_width_nm", errors, positive=True)
    _number(cfg, "modes.radial_max_over_a", errors, positive=True)
    _number(cfg, "magic.phi_step_deg", errors, positive=True)
    sw = cfg["sweep"]
    if not (isinstance(sw["r_over_a"], list) and sw["r_over_a"]
            and all(isinstance(x, (int, float)) for x in sw["r_over_a"])):
        errors.append("sweep.r_over_a: expected a non-empty list of numbers")
    if not (isinstance(sw["N_A"], list) and sw["N_A"]
            and all(isinstance(x, int) and x > 0 for x in sw["N_A"])):
        errors.append("sweep.N_A: expected a non-empty list of positive integers")
    _number(cfg, "sweep.threshold_db", errors)
    _number(cfg, "sweep.sphere_grid_deg", errors, positive=True)
    for sec, key in (("trap", "allow_close"), ("axis", "refine"), ("integration", "decoherence"),
                     ("sweep", "refine"), ("sweep", "full_sphere")):
        if not isinstance(cfg[sec][key], bool):
            errors.append(f"{sec}.{key}: expected true or false, got {cfg[sec][key]!r}")
    _number(cfg, "atom_number.r_over_a", errors, positive=True)
    _number(cfg, "atom_number.probe_MHz", errors)
    for key in ("atomic_data", "atom_number.atomic_data"):
        node = cfg
        for p in key.split("."):
            node = node[p]
        if not (str(node).upper() in ("D1", "D2") or Path(str(node)).is_file()):
            errors.append(f"{key}: {node!r} is neither D1, D2 nor an existing file")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path=None, overrides=(), seed=None, no_decoherence=False, out=None, fmt=None):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
        if not isinstance(user, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        unknown = [k for k in user if k not in DEFAULTS]
        if unknown:
            raise ConfigError([f"{k}: unknown section" for k in unknown])
        cfg = _merge(cfg, user)
    for item in overrides:
        apply_override(cfg, item)
    if seed is not None:
        cfg["integration"]["seed"] = seed
    if no_decoherence:
        cfg["integration"]["decoherence"] = False
    if out is not None:
        cfg["output"]["path"] = out
    if fmt is not None:
        cfg["output"]["format"] = fmt
    return validate(cfg)


# -- output -----------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return "" if x is None else str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_table(outdir, name, columns, rows, fmt):
    """Write one table as CSV (with schema line) or as JSON records."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = outdir / f"{name}.json"
        doc = {"schema": f"nanofiber-qsim/{name}/{SCHEMA_VERSION}", "columns": list(columns),
               "rows": [dict(zip(columns, (_jsonable(v) for v in r))) for r in rows]}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path
    path = outdir / f"{name}.csv"
    buf = io.StringIO()
    buf.write(f"{SCHEMA_PREFIX}{name}/{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def write_json(outdir, name, doc):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{name}.json"
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")
    return path


def read_csv(path):
    """Parse a table written by this tool: returns (schema, columns, rows).

    Numeric cells become floats; "true"/"false" become bools; everything
    else stays a string.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise ValueError(f"{path}: missing schema line")
    schema = lines[0][len("# schema: "):]
    reader = csv.reader(lines[1:])
    columns = next(reader)
    rows = []
    for rec in reader:
        row = []
        for cell in rec:
            if cell in ("true", "false"):
                row.append(cell == "true")
                continue
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(dict(zip(columns, row)))
    return schema, columns, rows


# -- commands ----------------------------------------------------------------

def _fiber(cfg):
    f = cfg["fiber"]
    return FiberSpec(float(f["radius_nm"]), float(f["n1"]), float(f["n2"]))


def _setup(cfg, data_key="atomic_data"):
    node = cfg
    for p in data_key.split("."):
        node = node[p]
    system = load_system(node)
    sol = solve_he11(_fiber(cfg), system.wavelength_nm)
    return system, sol


def _n_atoms(cfg):
    return int(cfg["trap"]["N_0"]) + int(cfg["trap"]["N_pi"])


def cmd_modes(cfg):
    system, sol = _setup(cfg)
    m = cfg["modes"]
    fmt, out = cfg["output"]["format"], cfg["output"]["path"]
    w = float(m["grid_half_width_nm"])
    xs = np.linspace(-w, w, int(m["grid_points"]))
    grid_rows = []
    for y in xs:
        for x in xs:
            if math.hypot(x, y) == 0:
                x = 1e-9 * sol.a
            uH, uV = local_modes(sol, x, y)
            grid_rows.append((x, y, np.vdot(uH, uH).real, np.vdot(uV, uV).real))
    rs = np.linspace(0.0, float(m["radial_max_over_a"]) * sol.a, int(m["radial_points"]) + 1)[1:]
    ur, up, uz = mode_profile(sol, rs)
    radial_rows = [
        (r, r / sol.a, a, b, c, 2 * (a * a + c * c), 2 * b * b)
        for r, a, b, c in zip(rs, ur, up, uz)
    ]
    files = [
        write_table(out, "modes_grid", ["x_nm", "y_nm", "I_H", "I_V"], grid_rows, fmt),
        write_table(out, "modes_radial", ["r_nm", "r_over_a", "u_r", "u_phi", "u_z", "I_H", "I_V"],
                    radial_rows, fmt),
    ]
    summary = {
        "wavelength_nm": sol.wavelength, "line": system.line, "beta0": sol.beta0,
        "n_eff": sol.beta0 / sol.k0, "n_g": sol.n_g, "h_in": sol.h_in, "q_out": sol.q_out,
        "s_param": sol.s_param, "u0": sol.u0, "v_number": sol.fiber.v_number(sol.wavelength),
        "radius_nm": sol.a,
    }
    files.append(write_json(out, "modes_summary", summary))
    return files


def cmd_magic(cfg):
    system, sol = _setup(cfg)
    r_perp = cfg["trap"]["r_over_a"] * sol.a
    site = TrapSite.at(sol, r_perp)
    step = float(cfg["magic"]["phi_step_deg"])
    branch = int(cfg["probe"]["branch"])
    rows = []
    for phi in np.arange(int(round(180.0 / step))) * step:
        axis = QuantizationAxis.from_degrees(phi)
        try:
            magic = magic_detunings(system, sol, axis, r_perp, site=site)
            cs = coupling_set(system, sol, axis, r_perp, branch, cfg["probe"]["photon_flux"],
                              site=site, magic=magic)
            rows.append((phi, magic.delta_mhz(system.f_down), magic.delta_mhz(system.f_up),
                         cs.chi_J3, ""))
        except NanofiberError as exc:
            rows.append((phi, np.nan, np.nan, np.nan, f"{type(exc).__name__}: {exc}"))
    cols = ["phi_deg", "delta3_MHz", "delta4_MHz", "chi_J3", "error"]
    return [write_table(cfg["output"]["path"], "magic", cols, rows, cfg["output"]["format"])]


def cmd_squeeze(cfg):
    system, sol = _setup(cfg)
    r_perp = cfg["trap"]["r_over_a"] * sol.a
    N_A = _n_atoms(cfg)
    integ = cfg["integration"]
    deco = bool(integ["decoherence"])
    coherent = cfg["probe"]["rates"] == "coherent"
    branch = int(cfg["probe"]["branch"])
    if cfg["axis"]["mode"] == "fixed":
        phi = float(cfg["axis"]["phi_deg"]) % 180.0
    else:
        phi, _ = optimize_axis(system, sol, r_perp, N_A, float(cfg["axis"]["grid_deg"]),
                               bool(cfg["axis"]["refine"]), True, branch, coherent, float(integ["dt"]))
    res = evaluate_axis(system, sol, r_perp, np.radians(phi), branch, cfg["probe"]["photon_flux"],
                        decoherence=True, coherent=coherent)
    rates = res.rates if deco else RateSet.zero(res.coupling.gamma_s)
    T = integ["T"]
    if T is None and not deco:
        T = integ["T_max"]
    traj = integrate_moments(
        coherent_state(N_A), res.coupling.od_per_atom, rates, T=T, dt=float(integ["dt"]),
        noise=integ["noise"], seed=int(integ["seed"]), stride=int(cfg["output"]["stride"]),
        T_max=float(integ["T_max"]), sign=float(np.sign(res.coupling.chi_J3) or 1.0),
    )
    single, pair = variance_decomposition(traj)
    rows = list(zip(traj.t, traj.N_C, traj.J1, traj.J3, traj.varJ3, traj.xi2_db, single, pair))
    cols = ["t_gamma_s", "N_C", "J1", "J3", "varJ3", "xi2_db", "single_body", "two_body"]
    out, fmt = cfg["output"]["path"], cfg["output"]["format"]
    summary = {
        "peak_db": traj.peak_db, "t_peak": traj.t_peak, "phi_used": phi, "N_A": N_A,
        "r_over_a": cfg["trap"]["r_over_a"], "decoherence": deco, "noise": integ["noise"],
        "seed": int(integ["seed"]), "dt": traj.dt,
        "magic_delta_MHz": {str(f): res.magic.delta_mhz(f) for f in system.ground_f},
        "coupling_set": res.coupling.as_dict(), "rate_set": rates.as_dict(),
        "rate_set_gamma_s_units": rates.scaled().as_dict(),
    }
    return [write_table(out, "squeeze", cols, rows, fmt), write_json(out, "squeeze_summary", summary)]


def cmd_sweep(cfg):
    system, sol = _setup(cfg)
    sw = cfg["sweep"]
    rows = sweep(system, sol, sw["r_over_a"], sw["N_A"], float(sw["grid_deg"]),
                 int(cfg["probe"]["branch"]), bool(sw["refine"]), float(cfg["integration"]["dt"]),
                 bool(cfg["trap"]["allow_close"]), float(sw["threshold_db"]))
    cols = ["r_over_a", "N_A", "phi_opt_deg", "od_per_atom", "delta_magic_MHz", "peak_db", "t_peak",
            "observable", "status"]
    table = [tuple(getattr(r, c) for c in cols) for r in rows]
    out, fmt = cfg["output"]["path"], cfg["output"]["format"]
    files = [write_table(out, "sweep", cols, table, fmt)]
    if sw["full_sphere"]:
        thetas, phis, peak = sphere_scan(system, sol, cfg["trap"]["r_over_a"] * sol.a, _n_atoms(cfg),
                                         float(sw["sphere_grid_deg"]), int(cfg["probe"]["branch"]),
                                         float(cfg["integration"]["dt"]))
        grid = [(t, p, peak[i, j]) for i, t in enumerate(thetas) for j, p in enumerate(phis)]
        files.append(write_table(out, "sphere", ["theta_deg", "phi_deg", "peak_db"], grid, fmt))
    return files


def cmd_atom_number(cfg):
    system, sol = _setup(cfg, "atom_number.atomic_data")
    an = cfg["atom_number"]
    res = atom_number_resolution(system, sol, an["r_over_a"] * sol.a, cfg["probe"]["photon_flux"],
                                 2 * np.pi * 1e6 * float(an["probe_MHz"]))
    doc = {
        "chi_N": res.chi_N, "A_N_nm2": res.A_N, "A_in_nm2": res.A_in, "delta_N_A": res.delta_N_A,
        "scalar_weight_C0": res.scalar_weight, "sigma0_over_A_in": system.sigma0 / res.A_in,
        "line": system.line, "r_over_a": an["r_over_a"], "probe_MHz": an["probe_MHz"],
        "chi_N_sign_note": "chi_N has the sign of |u_H|^2 - |u_V|^2 at the trap site times the "
                           "sign of the scalar response",
    }
    return [write_json(cfg["output"]["path"], "atom_number", doc)]


COMMANDS = {
    "modes": cmd_modes,
    "magic": cmd_magic,
    "squeeze": cmd_squeeze,
    "sweep": cmd_sweep,
    "atom-number": cmd_atom_number,
}


def build_parser():
    p = argparse.ArgumentParser(prog="nanofiber-qsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry, e.g. trap.r_over_a=2.0")
    p.add_argument("--seed", type=int, help="seed for stochastic integration")
    p.add_argument("--no-decoherence", action="store_true", help="switch off optical pumping")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="table format")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.no_decoherence, args.out,
                          args.format)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    try:
        files = COMMANDS[args.command](cfg)
    except NanofiberError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
