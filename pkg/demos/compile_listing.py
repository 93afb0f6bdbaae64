"""Compile the sample anomaly rule and show what lands on the switch.

Run: python3 demos/compile_listing.py
"""
from pathlib import Path

from p4cep import compile_source, generate_artifacts, load_headers
from p4cep.rules import format_predicate

DATA = Path(__file__).parent / "data"

headers = load_headers(DATA / "l3l4.headers")
program = compile_source((DATA / "listing1.rules").read_text(), headers)

print("predicates, in id order:")
for pid, pred in program.predicates:
    print(f"  x{pid}: {format_predicate(pred)}")

machine = program.machines[0]
print(f"\nmachine {machine.name}: {machine.n_states} states, "
      f"{len(machine.rows)} transition rows, strategy {machine.strategy.value}")
for row in machine.rows:
    flag = " (accept)" if row.is_accepting else ""
    print(f"  q{row.q} --x{row.x}--> q{row.q_n}{flag}")

art = generate_artifacts(program)
print("\ntable entries:")
print(art.table_entries, end="")
print(f"\nP4 program: {len(art.p4_source.splitlines())} lines")
