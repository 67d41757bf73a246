"""Regenerate data/ieee39/network.csv from the MATPOWER 39-bus case.

Loads at buses 1 and 12 are removed (the dispatch variant whose solved slack
output is ~571 MW), the AC power flow is solved with pypower, and the solved
branch flows, bus voltages, branch impedances and classical-model machine data
are written in the sectioned CSV format read by the `ingest` module.

    pip install pypower
    python3 data/tools/gen_ieee39.py > data/ieee39/network.csv
"""
from pypower.api import case39, runpf, ppoption

# Classical-model machine data on the 100 MVA system base, keyed by bus.
MACHINES = {
    30: (42.0, 0.0310),
    31: (30.3, 0.0697),
    32: (35.8, 0.0531),
    33: (28.6, 0.0436),
    34: (26.0, 0.1320),
    35: (34.8, 0.0500),
    36: (26.4, 0.0490),
    37: (24.3, 0.0570),
    38: (34.5, 0.0570),
    39: (500.0, 0.0060),
}
ZERO_LOAD_BUSES = (1, 12)


def main():
    case = case39()
    for b in ZERO_LOAD_BUSES:
        case["bus"][b - 1, 2] = 0.0
        case["bus"][b - 1, 3] = 0.0
    res, ok = runpf(case, ppoption(VERBOSE=0, OUT_ALL=0))
    assert ok, "power flow did not converge"

    out = []
    out.append("#SYSTEM base_mva,freq_hz")
    out.append("%g,60" % res["baseMVA"])
    out.append("#BUS id,load_p_mw,load_q_mvar")
    for row in res["bus"]:
        out.append("%d,%.4f,%.4f" % (row[0], row[2], row[3]))
    out.append("#BUS_V id,vm_pu,va_deg")
    for row in res["bus"]:
        out.append("%d,%.10f,%.10f" % (row[0], row[7], row[8]))
    out.append("#BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker")
    for row in res["branch"]:
        out.append("%d,%d,1,%.6f,%.6f,1" % (row[0], row[1], row[13], row[15]))
    out.append("#BRANCH_Z from,to,circuit,r_pu,x_pu,b_pu,tap")
    for row in res["branch"]:
        tap = row[8] if row[8] != 0 else 1.0
        out.append("%d,%d,1,%.6f,%.6f,%.6f,%.6f" % (row[0], row[1], row[2], row[3], row[4], tap))
    out.append("#GEN gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu")
    for i, row in enumerate(res["gen"]):
        bus = int(row[0])
        h, xdp = MACHINES[bus]
        out.append("G%d,%d,%.6f,%.4f,%.4f,%.4f,%.4f" % (i + 1, bus, row[1], row[4], row[3], h, xdp))
    print("\n".join(out))


if __name__ == "__main__":
    main()
