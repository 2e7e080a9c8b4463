# Long-lived HiGHS worker. Reads framed models from stdin and writes framed
# solutions to stdout.
#
# Request:  one JSON header line, then little-endian arrays:
#   col_cost, col_lower, col_upper (f64 x ncol), row_lower, row_upper
#   (f64 x nrow), row_start (i32 x nrow+1), col_index (i32 x nnz),
#   value (f64 x nnz), integrality (u8 x ncol, only when header.integer),
#   start (f64 x ncol, only when header.has_start).
# Response: one JSON header line, then col_value (f64 x ncol) and, when
#   header.has_duals, row_dual (f64 x nrow).
import json
import os
import sys

import numpy as np

try:
    import highspy as hs
except ImportError:
    from scipy.optimize._highspy import _core as hs

    hs.Highs = hs._Highs

inp = sys.stdin.buffer
out = sys.stdout.buffer


def read_array(dtype, count):
    size = np.dtype(dtype).itemsize * count
    buf = inp.read(size)
    if len(buf) != size:
        raise EOFError("truncated request")
    return np.frombuffer(buf, dtype=dtype)


STATUS = {
    "kOptimal": "optimal",
    "kInfeasible": "infeasible",
    "kUnbounded": "unbounded",
    "kUnboundedOrInfeasible": "infeasible",
    "kTimeLimit": "time_limit",
    "kIterationLimit": "time_limit",
    "kSolutionLimit": "time_limit",
}


def solve(header):
    ncol, nrow, nnz = header["ncol"], header["nrow"], header["nnz"]
    lp = hs.HighsLp()
    lp.num_col_ = ncol
    lp.num_row_ = nrow
    lp.col_cost_ = read_array("<f8", ncol)
    lp.col_lower_ = read_array("<f8", ncol)
    lp.col_upper_ = read_array("<f8", ncol)
    lp.row_lower_ = read_array("<f8", nrow)
    lp.row_upper_ = read_array("<f8", nrow)
    lp.a_matrix_.format_ = hs.MatrixFormat.kRowwise
    lp.a_matrix_.num_col_ = ncol
    lp.a_matrix_.num_row_ = nrow
    lp.a_matrix_.start_ = read_array("<i4", nrow + 1)
    lp.a_matrix_.index_ = read_array("<i4", nnz)
    lp.a_matrix_.value_ = read_array("<f8", nnz)
    integer = header.get("integer", False)
    start = None
    if integer:
        flags = read_array("u1", ncol)
        lp.integrality_ = [
            hs.HighsVarType.kInteger if f else hs.HighsVarType.kContinuous for f in flags
        ]
        if header.get("has_start", False):
            start = read_array("<f8", ncol)
    h = hs.Highs()
    log_file = os.environ.get("FRPSIM_SOLVER_LOG")
    if log_file:
        # stdout carries the protocol, so the log only goes to the file
        h.setOptionValue("log_to_console", False)
        h.setOptionValue("log_file", log_file)
    else:
        h.setOptionValue("output_flag", False)
    for key, value in header.get("options", {}).items():
        h.setOptionValue(key, value)
    h.passModel(lp)
    if start is not None:
        hint = hs.HighsSolution()
        hint.col_value = start
        hint.value_valid = True
        h.setSolution(hint)
    h.run()
    model_status = h.getModelStatus()
    name = str(model_status).split(".")[-1]
    status = STATUS.get(name, "error:" + h.modelStatusToString(model_status))
    sol = h.getSolution()
    info = h.getInfo()
    has_primal = bool(sol.value_valid) and status in ("optimal", "time_limit")
    has_duals = bool(sol.dual_valid) and not integer and status == "optimal"
    # json has no infinity; an optimal solve with a zero objective reports one
    gap = float(info.mip_gap) if integer else 0.0
    if not np.isfinite(gap):
        gap = 0.0 if status == "optimal" else None
    reply = {
        "status": status,
        "objective": float(h.getObjectiveValue()) if has_primal else None,
        "mip_gap": gap,
        "has_primal": has_primal,
        "has_duals": has_duals,
        "run_time": float(h.getRunTime()),
    }
    out.write((json.dumps(reply) + "\n").encode())
    if has_primal:
        out.write(np.asarray(sol.col_value, dtype="<f8").tobytes())
    if has_duals:
        out.write(np.asarray(sol.row_dual, dtype="<f8").tobytes())
    out.flush()


def main():
    while True:
        line = inp.readline()
        if not line:
            return
        line = line.strip()
        if not line:
            continue
        try:
            solve(json.loads(line))
        except EOFError:
            return
        except Exception as exc:  # reported to the caller, worker stays alive
            out.write((json.dumps({"status": "error:" + repr(exc)}) + "\n").encode())
            out.flush()


if __name__ == "__main__":
    main()
