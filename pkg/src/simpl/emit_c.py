"""C code generation: a recursive descent over the residual statement forms.

Only the assembly-like subset is translatable (arithmetic, reads/writes,
loops, branches, flips, caches, normalize); anything structural that
survived specialization (list or graph operations, dynamic node handles)
raises an unsupported-feature error instead of silently degrading.

The emitted unit is one translation unit including "simpl_rt.h" (the
self-contained runtime header shipped with the C baseline): a `run_program`
function mirroring the trace statement for statement, plus a `main` that
seeds the PRNG from argv, runs, and prints the estimate as JSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnsupportedFeatureError
from .ir import (AllocVec, CacheInfo, CacheStmt, Const, DeclCell, Def, Effect,
                 Flip, ForStmt, IfStmt, NormalizeStmt, PrintStmt, RandomIndex,
                 Ref, RequirePositive, ResidualProgram, SetCell, SetVec)

RT_VERSION = 1
RECOMMENDED_CC = "cc -std=c99 -O2 -Wall -Wextra"

_CTYPE = {"bool": "bool", "int": "int64_t", "float": "double"}
_BINOP = {"add": "+", "sub": "-", "mul": "*", "eq": "==", "lt": "<", "gt": ">",
          "le": "<=", "ge": ">="}


@dataclass
class EmittedUnit:
    name: str
    code: str
    manifest: dict = field(default_factory=dict)


def _float_lit(x: float) -> str:
    r = repr(float(x))
    return r if any(c in r for c in ".einf") else r + ".0"


class _Emitter:
    def __init__(self, rp: ResidualProgram, debug_cache: bool):
        self.rp = rp
        self.debug_cache = debug_cache
        self.lines: list[str] = []
        self.depth = 1
        self.blk = 0
        from .ir import used_refs
        self.used = used_refs(rp)

    def out(self, line: str):
        self.lines.append("    " * self.depth + line)

    # --- operands -------------------------------------------------------------

    def kind_of(self, x) -> str:
        if isinstance(x, Const):
            if isinstance(x.value, bool):
                return "bool"
            if isinstance(x.value, int):
                return "int"
            if isinstance(x.value, float):
                return "float"
            raise UnsupportedFeatureError(
                f"C backend: structured constant {x.value!r} has no translation")
        name = x.name
        if name in self.rp.temp_kinds:
            return self.rp.temp_kinds[name]
        if name in self.rp.cells:
            return self.rp.cells[name].kind.replace("_array", "").replace("const_", "")
        return "int"  # params, loop variables

    def ctype(self, kind: str) -> str:
        if kind not in _CTYPE:
            raise UnsupportedFeatureError(f"C backend: cannot type a value of kind {kind!r}")
        return _CTYPE[kind]

    def opnd(self, x) -> str:
        if isinstance(x, Ref):
            return x.name
        v = x.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, int):
            return str(v)
        if isinstance(v, float):
            return _float_lit(v)
        raise UnsupportedFeatureError(
            f"C backend: constant {v!r} has no translation")

    # --- statements -------------------------------------------------------------

    def stmt_def(self, s: Def):
        t = s.target
        if s.op in _BINOP:
            a, b = (self.opnd(x) for x in s.args)
            kind = self.rp.temp_kinds[t]
            self.out(f"{self.ctype(kind)} {t} = {a} {_BINOP[s.op]} {b};")
        elif s.op == "div":
            a, b = (self.opnd(x) for x in s.args)
            self.out(f"double {t} = (double){a} / (double){b};")
        elif s.op == "neg":
            kind = self.rp.temp_kinds[t]
            self.out(f"{self.ctype(kind)} {t} = -{self.opnd(s.args[0])};")
        elif s.op == "not":
            self.out(f"bool {t} = !{self.opnd(s.args[0])};")
        elif s.op == "abs":
            kind = self.rp.temp_kinds[t]
            fn = "fabs" if kind == "float" else "llabs"
            self.out(f"{self.ctype(kind)} {t} = {fn}({self.opnd(s.args[0])});")
        elif s.op in ("min", "max"):
            a, b = (self.opnd(x) for x in s.args)
            kind = self.rp.temp_kinds[t]
            cmp = "<" if s.op == "min" else ">"
            self.out(f"{self.ctype(kind)} {t} = ({b} {cmp} {a} ? {b} : {a});")
        elif s.op == "read":
            cell = s.args[0].name
            kind = self.rp.cells[cell].kind
            self.out(f"{self.ctype(kind)} {t} = {cell};")
        elif s.op == "readvec":
            cell = s.args[0].name
            kind = self.rp.cells[cell].kind.replace("_array", "").replace("const_", "")
            self.out(f"{self.ctype(kind)} {t} = {cell}[{self.opnd(s.args[1])}];")
        else:
            raise UnsupportedFeatureError(
                f"C backend: residual operation {s.op!r} is not in the translatable "
                "subset (structural values must be specialized away)")

    def emit_block(self, stmts):
        for s in stmts:
            if isinstance(s, Def):
                self.stmt_def(s)
            elif isinstance(s, Flip):
                if s.target in self.used:
                    self.out(f"bool {s.target} = simpl_flip(rng, {self.opnd(s.p)});")
                else:
                    self.out(f"(void)simpl_flip(rng, {self.opnd(s.p)});")
            elif isinstance(s, RandomIndex):
                if s.target in self.used:
                    self.out(f"int64_t {s.target} = simpl_random_index(rng, "
                             f"{self.opnd(s.k)});")
                else:
                    self.out(f"(void)simpl_random_index(rng, {self.opnd(s.k)});")
            elif isinstance(s, RequirePositive):
                a = self.opnd(s.arg)
                self.out(f"if (!({a} > 0)) simpl_fail(\"require-positive: value is not "
                         "positive\", 9);")
                if s.target in self.used:
                    kind = self.rp.temp_kinds[s.target]
                    self.out(f"{self.ctype(kind)} {s.target} = {a};")
            elif isinstance(s, SetCell):
                self.out(f"{s.cell} = {self.opnd(s.value)};")
            elif isinstance(s, SetVec):
                self.out(f"{s.cell}[{self.opnd(s.index)}] = {self.opnd(s.value)};")
            elif isinstance(s, AllocVec):
                n = len(s.items)
                self.out(f"double {s.cell}[{max(n, 1)}];")
                for i, item in enumerate(s.items):
                    self.out(f"{s.cell}[{i}] = {self.opnd(item)};")
            elif isinstance(s, DeclCell):
                self.out(f"{self.ctype(s.kind)} {s.name} = {self.opnd(s.init)};")
            elif isinstance(s, IfStmt):
                self.out(f"if ({self.opnd(s.cond)}) {{")
                self.depth += 1
                self.emit_block(s.then)
                self.depth -= 1
                if s.els:
                    self.out("} else {")
                    self.depth += 1
                    self.emit_block(s.els)
                    self.depth -= 1
                self.out("}")
            elif isinstance(s, ForStmt):
                self.out(f"for (int64_t {s.var} = 0; {s.var} < {self.opnd(s.bound)}; "
                         f"{s.var}++) {{")
                self.depth += 1
                self.emit_block(s.body)
                self.depth -= 1
                self.out("}")
            elif isinstance(s, CacheStmt):
                self.emit_cache(s)
            elif isinstance(s, NormalizeStmt):
                self.emit_normalize(s)
            elif isinstance(s, PrintStmt):
                self.emit_print(s)
            elif isinstance(s, Effect):
                raise UnsupportedFeatureError(
                    f"C backend: dynamic-structure effect {s.op!r} is not translatable")
            else:  # pragma: no cover
                raise UnsupportedFeatureError(f"C backend: unknown statement {s!r}")

    def emit_print(self, s: PrintStmt):
        kind = self.kind_of(s.arg)
        a = self.opnd(s.arg)
        if kind == "float":
            self.out(f'printf("%.17g\\n", {a});')
        elif kind == "int":
            self.out(f'printf("%lld\\n", (long long){a});')
        else:
            self.out(f'printf("%s\\n", {a} ? "true" : "false");')

    def emit_normalize(self, s: NormalizeStmt):
        size = self.rp.cells[s.cell].length
        self.blk += 1
        sv = f"_s{self.blk}"
        self.out("{")
        self.depth += 1
        self.out(f"double {sv} = 0.0;")
        for i in range(size):
            self.out(f"{sv} += {s.cell}[{i}];")
        self.out(f"if ({sv} == 0.0) simpl_fail(\"normalize: weight vector sums to zero\", 9);")
        for i in range(size):
            self.out(f"{s.cell}[{i}] = {s.cell}[{i}] / {sv};")
        self.depth -= 1
        self.out("}")

    # --- caches -----------------------------------------------------------------

    def key_layout(self, info: CacheInfo):
        """(total words, packing steps); bools pack bitwise, scalars take words."""
        steps = []
        bits = 0
        for name, kind, length in info.keys:
            if kind == "bool":
                steps.append(("bit", name))
                bits += 1
            elif kind == "bool[]":
                steps.append(("bits", name, length))
                bits += length
            elif kind == "int":
                bits = (bits + 63) // 64 * 64
                steps.append(("word", name, "int"))
                bits += 64
            elif kind == "float":
                bits = (bits + 63) // 64 * 64
                steps.append(("word", name, "float"))
                bits += 64
            else:
                raise UnsupportedFeatureError(
                    f"C backend: cache key {name} of kind {kind!r} is not translatable")
        return max(1, (bits + 63) // 64), steps

    def emit_cache(self, s: CacheStmt):
        info = self.rp.caches[s.cache_id]
        nwords, steps = self.key_layout(info)
        t = s.target
        kind = self.rp.temp_kinds[t]
        zero = {"bool": "false", "int": "0", "float": "0.0"}[kind]
        self.out(f"{self.ctype(kind)} {t} = {zero};")
        self.out("{")
        self.depth += 1
        self.out(f"uint64_t _kw[{nwords}] = {{0}};")
        self.out("int _kb = 0; (void)_kb;")
        for step in steps:
            if step[0] == "bit":
                self.out(f"simpl_key_bit(_kw, &_kb, {step[1]});")
            elif step[0] == "bits":
                self.out(f"for (int _i = 0; _i < {step[2]}; _i++) "
                         f"simpl_key_bit(_kw, &_kb, {step[1]}[_i]);")
            else:
                conv = "simpl_d2u" if step[2] == "float" else "(uint64_t)"
                self.out(f"simpl_key_word(_kw, &_kb, {conv}({step[1]}));")
        cache = f"c_{s.cache_id}"
        if self.debug_cache:
            self.emit_block(s.body)
            res = self.opnd(s.result)
            self.out(f"{t} = {res};")
            self.out(f"double *_slot = simpl_cache_lookup(&{cache}, _kw);")
            self.out("if (_slot) {")
            self.out(f"    if (*_slot != (double){t}) simpl_fail(\"cache mismatch in "
                     "debug mode\", 8);")
            self.out("} else {")
            self.out(f"    simpl_cache_store(&{cache}, _kw, (double){t});")
            self.out("}")
        else:
            self.out(f"double *_slot = simpl_cache_lookup(&{cache}, _kw);")
            self.out("if (_slot) {")
            self.depth += 1
            cast = {"bool": "(*_slot != 0.0)", "int": "(int64_t)*_slot",
                    "float": "*_slot"}[kind]
            self.out(f"{t} = {cast};")
            self.depth -= 1
            self.out("} else {")
            self.depth += 1
            self.emit_block(s.body)
            self.out(f"{t} = {self.opnd(s.result)};")
            self.out(f"simpl_cache_store(&{cache}, _kw, (double){t});")
            self.depth -= 1
            self.out("}")
        self.depth -= 1
        self.out("}")


def _check_result_visible(rp: ResidualProgram):
    if not isinstance(rp.result, Ref):
        return
    name = rp.result.name
    decl = rp.cells.get(name)
    if decl is None or not decl.kind.endswith("_array") or decl.node is not None:
        return
    for s in rp.body:
        if isinstance(s, AllocVec) and s.cell == name:
            return
    raise UnsupportedFeatureError(
        "C backend: the result vector must be allocated at the top level of the trace")


def emit_c(rp: ResidualProgram, name: str = "program", debug_cache: bool = False,
           default_burn: int = 0) -> EmittedUnit:
    """Translate a residual program into a self-contained C unit.

    Process contract of the compiled binary:
        ./prog <seed> <N> [burn]   ->  {"estimate": [...], "flips": n,
                                        "elapsed_ns": t, "cache": [...]} on stdout
        ./prog rngdump <seed> <k>  ->  PRNG state after k draws (cross-check mode)
    """
    _check_result_visible(rp)
    em = _Emitter(rp, debug_cache)

    written: set = set()

    def collect_writes(stmts):
        for s in stmts:
            if isinstance(s, (SetCell, SetVec)):
                written.add(s.cell)
            elif isinstance(s, NormalizeStmt):
                written.add(s.cell)
            elif isinstance(s, IfStmt):
                collect_writes(s.then), collect_writes(s.els)
            elif isinstance(s, (ForStmt, CacheStmt)):
                collect_writes(s.body)

    collect_writes(rp.body)

    decls: list[str] = []
    for cname in sorted(rp.cells):
        d = rp.cells[cname]
        if d.node is None:
            continue  # joins/locals/vectors are declared by their statements
        if cname not in em.used and cname not in written:
            continue  # untouched model cell: declaring it would only warn
        if d.kind == "bool":
            decls.append(f"    bool {cname} = false;")
        elif d.kind == "bool_array":
            decls.append(f"    bool {cname}[{d.length}];")
            decls.append(f"    memset({cname}, 0, sizeof {cname});")
        elif d.kind == "const_bool_array":
            rows = []
            vals = ["1" if b else "0" for b in d.init]
            for i in range(0, len(vals), 40):
                rows.append("        " + ",".join(vals[i:i + 40]))
            decls.append(f"    static const bool {cname}[{d.length}] = {{")
            decls.append(",\n".join(rows))
            decls.append("    };")

    em.emit_block(rp.body)

    if isinstance(rp.result, Ref):
        rname = rp.result.name
        decl = rp.cells.get(rname)
        if decl is not None and decl.kind.endswith("_array"):
            est_len = decl.length
            tail = [f"    out_len = {est_len};"]
            tail += [f"    out_vals[{i}] = {rname}[{i}];" for i in range(est_len)]
        else:
            est_len = 1
            tail = ["    out_len = 1;", f"    out_vals[0] = (double){rname};"]
    elif rp.result.value is None:
        est_len = 0
        tail = ["    out_len = 0;"]
    else:
        est_len = 1
        tail = ["    out_len = 1;", f"    out_vals[0] = (double){em.opnd(rp.result)};"]
    if est_len > 64:
        raise UnsupportedFeatureError("C backend: estimate vector too long")

    cache_inits = []
    cache_stats = []
    for cid in sorted(rp.caches):
        info = rp.caches[cid]
        nwords, _ = em.key_layout(info)
        bits = sum(1 if k == "bool" else ln if k == "bool[]" else 64
                   for _, k, ln in info.keys)
        dense = "true" if info.dense else "false"
        cache_inits.append(f"    simpl_cache_init(&c_{cid}, {nwords}, {dense}, "
                           f"{bits if info.dense else 0});")
        cache_stats.append(cid)

    params = rp.params
    sig_params = "".join(f", int64_t {p}" for p in params)
    call_args = "".join(f", {p}" for p in params)

    stats_fmt = ",".join(
        f'{{\\"id\\":\\"{cid}\\",\\"hits\\":%llu,\\"misses\\":%llu,\\"size\\":%llu}}'
        for cid in cache_stats)
    stats_args = "".join(
        f",\n           (unsigned long long)c_{cid}.hits, (unsigned long long)c_{cid}.misses, "
        f"(unsigned long long)simpl_cache_size(&c_{cid})" for cid in cache_stats)

    code = f"""/* {name}: generated sampling program */
#include "simpl_rt.h"

{chr(10).join(f"static simpl_cache c_{cid};" for cid in sorted(rp.caches))}
static double out_vals[{max(est_len, 1)}];
static int out_len;

static void run_program(simpl_rng *rng{sig_params})
{{
    (void)rng;
{chr(10).join(f"    (void){p};" for p in params)}
{chr(10).join(decls)}
{chr(10).join(em.lines)}
{chr(10).join(tail)}
}}

int main(int argc, char **argv)
{{
    if (argc >= 4 && strcmp(argv[1], "rngdump") == 0) {{
        simpl_rng rng = {{ strtoull(argv[2], NULL, 10), 0 }};
        long long k = atoll(argv[3]);
        for (long long i = 0; i < k; i++) simpl_next(&rng);
        printf("{{\\"state\\":%llu,\\"draws\\":%llu}}\\n",
               (unsigned long long)rng.state, (unsigned long long)rng.draws);
        return 0;
    }}
    if (argc < 3) {{
        fprintf(stderr, "usage: %s <seed> <N> [burn]\\n", argv[0]);
        return 2;
    }}
    uint64_t seed = strtoull(argv[1], NULL, 10);
    int64_t N = atoll(argv[2]);
    int64_t burn = argc > 3 ? atoll(argv[3]) : {default_burn};
    (void)N; (void)burn;
    simpl_rng rng = {{ seed, 0 }};
{chr(10).join(cache_inits)}
    int64_t t0 = simpl_now_ns();
    run_program(&rng{call_args});
    int64_t t1 = simpl_now_ns();
    printf("{{\\"estimate\\":[");
    for (int i = 0; i < out_len; i++)
        printf("%s%.17g", i ? "," : "", out_vals[i]);
    printf("],\\"flips\\":%llu,\\"elapsed_ns\\":%lld,\\"cache\\":[{stats_fmt}]}}\\n",
           (unsigned long long)rng.draws, (long long)(t1 - t0){stats_args});
    return 0;
}}
"""
    manifest = {
        "entry": "main",
        "rt_header": "simpl_rt.h",
        "rt_version": RT_VERSION,
        "params": list(params),
        "default_burn": default_burn,
        "debug_cache": debug_cache,
        "estimate_len": est_len,
        "cc_recommended": f"{RECOMMENDED_CC} -o {name} {name}.c -lm",
    }
    return EmittedUnit(name, code, manifest)
