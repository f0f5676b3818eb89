"""A tour of the neighbours calculus, from one firing to a small network.

    python3 demos/walkthrough.py
"""
from neighbours.core import Program
from neighbours.device import fire, format_tree
from neighbours.hfc import check_hfc_prime, check_same_behaviour, refactor_abstract_params
from neighbours.network import ExplicitTrace, RoundRobin, Simulator, Stop, initial_config, make_env
from neighbours.parser import parse_expr, parse_program, show_expr
from neighbours.prims import SensorState
from neighbours.stdlib import load_program
from neighbours.typesys import format_scheme, format_type, infer_program


def section(title):
    print(f"\n== {title}")


FOLD = "2 + foldhood(0, +, min(nbr{temperature()}, temperature()))"

section("parsing and typing")
p = parse_program(FOLD)
print(show_expr(p.main))
print("main :", format_type(infer_program(p)[1]))
schemes, _ = infer_program(load_program("0"))
print("gradient :", format_scheme(schemes["gradient"]))

section("one firing")
# two neighbours have already fired and sent their trees
neighbours = {1: fire(1, {}, SensorState({"temperature": 15.0}), p),
              2: fire(2, {}, SensorState({"temperature": 5.0}), p)}
theta = fire(0, neighbours, SensorState({"temperature": 10.0}), p)
print("root:", theta.root)      # 2 + min(15, 10) + min(5, 10)
print(format_tree(theta))

section("state across firings")
rep = parse_program("rep(3){(x) => x + 1}")
stored = {}
for _ in range(3):
    t = fire(0, stored, SensorState(), rep)
    stored = {0: t}
    print("fired:", t.root)

section("a scripted network")
env = make_env([1, 2, 3], [(1, 2), (1, 3), (2, 3)],
               {d: SensorState({"temperature": float(v)}) for d, v in {1: 10, 2: 15, 3: 5}.items()})
res = Simulator(p).run(initial_config(env),
                       ExplicitTrace([("+", 2), ("-", 2), ("+", 3), ("-", 3), ("+", 1), ("-", 1)]))
print(res.log.text())
print("roots:", res.config.roots())

section("gradient on a line")
n = 6
rel = {d: {e: 1.0 for e in (d - 1, d + 1) if 0 <= e < n} for d in range(n)}
env = make_env(list(range(n)), [(d, d + 1) for d in range(n - 1)],
               {d: SensorState({"isSource": d == 0}, {"nbrRange": rel[d]}) for d in range(n)})
res = Simulator(load_program("gradient(isSource(), nbrRange)")).run(
    initial_config(env), RoundRobin(), stop=Stop(max_rounds=10))
print("distances:", [res.config.roots()[d] for d in range(n)])

section("the field calculus view")
avg = load_program("def avghood(x) { foldhood(0, +, x) / counthood() } avghood(nbr{temperature()})")
report = check_hfc_prime(avg)
print("avghood in the fragment:", report.ok)
print("  ", report)
# hot devices report the largest neighbour count among their neighbours; the
# field argument is used under a branch, so only the rewrite is in the fragment
count = load_program("((x) => if (temperature() < 30) { 0 } "
                     "{ foldhood(counthood(), max, x) })(nbr{counthood()})")
print("counthood redex in the fragment:", check_hfc_prime(count).ok)
refactored = refactor_abstract_params(count.main, [parse_expr("counthood()", functions=["counthood"])], count.table)
print("parameters abstracted:", show_expr(refactored))
print("rewrite in the fragment:", check_hfc_prime(Program(count.functions, refactored)).ok)
actions = [(a, d) for _ in range(3) for d in (1, 2, 3) for a in "+-"]
env = make_env([1, 2, 3], [(1, 2), (2, 3)],
               {d: SensorState({"temperature": float(20 * d)}) for d in (1, 2, 3)})
print("NC and HFC agree on the rewrite:",
      check_same_behaviour(Program(count.functions, refactored), env, actions).ok)
