"""Change a deployed rule without recompiling.

Deleting one accepting row leaves only the UDP path to completion.
Switching the default action to reset makes the machine strict.

Run: python3 demos/runtime_update.py
"""
from pathlib import Path

from p4cep import EventPacket, TransitionRow, compile_source, deploy, load_headers

DATA = Path(__file__).parent / "data"
program = compile_source((DATA / "listing1.rules").read_text(),
                         load_headers(DATA / "l3l4.headers"))


def pkt(seq, length=100, port=443, proto=6):
    return EventPacket(seq, {"ipv4.totalLen": length, "tcp.dstPort": port,
                             "ipv4.protocol": proto})


busy = [pkt(i, 1500) for i in range(1, 5)] + [pkt(5, 400, 80), pkt(6)]

handle = deploy(program)
print("stock rule:", [(e.seq, e.value) for e in handle.run(busy)])

handle = deploy(program)
sum_row = next(r for r in handle.rows("sample_evt") if r.is_accepting and r.x == 2)
handle.update_table("sample_evt", [sum_row], "delete")
print("without window row:", [(e.seq, e.value) for e in handle.run(busy)])
print("  still waiting in state", handle.current_state("sample_evt"))

handle = deploy(program)
handle.apply_entries("table_set_default m0_sample_evt_transitions cep_reset\n")
handle.run([pkt(1, 600), pkt(2, port=80), pkt(3), pkt(4, proto=17)])
print("strict default, noise in between: state", handle.current_state("sample_evt"))

handle = deploy(program)
handle.update_table("sample_evt", [TransitionRow(0, 0, 2, False)], "replace")
print("after replace:", [r for r in handle.rows("sample_evt") if r.q == 0])
