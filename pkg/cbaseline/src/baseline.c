/* Handcoded Bayes-net inference baseline, general model structure.
 *
 * Supports the same .bn models and the same four algorithms as the
 * generated code, with a similar model data structure, but nothing is
 * specialized: parents are looked up at runtime, CPTs are indexed at
 * runtime, evidence is tested per access, and every node carries a value
 * array even when its length is one.
 *
 * The PRNG and the sampling order match the toolchain draw for draw, so
 * estimates are bit-identical per seed.
 *
 * Usage:
 *   simpl_baseline <model.bn> <algo> <seed> <N> [burn]
 *   simpl_baseline rngdump <seed> <k>
 *   simpl_baseline cpt-selftest <model.bn>
 */
#include "simpl_rt.h"

#define MAX_NODES 64
#define MAX_PARENTS 8
#define MAX_NAME 64

typedef struct {
    char name[MAX_NAME];
    int nparents;
    int parents[MAX_PARENTS];
    int nchildren;
    int children[MAX_NODES];
    double *cpt;      /* 2^nparents leaves, true-first nesting order */
    int len;          /* number of value slots */
    bool is_array;    /* declared with (array ...) */
    bool *values;
    bool has_evidence;
    bool *evidence;
} Node;

typedef struct {
    int nnodes;
    Node nodes[MAX_NODES];
    int query;
    int query_index;
} Net;

static void die(const char *msg)
{
    fprintf(stderr, "simpl_baseline: %s\n", msg);
    exit(4);
}

/* ---- tokenizer --------------------------------------------------------- */

typedef struct {
    const char *src;
    size_t pos;
    size_t len;
} Lexer;

static void skip_ws(Lexer *lx)
{
    while (lx->pos < lx->len) {
        char c = lx->src[lx->pos];
        if (c == ';') {
            while (lx->pos < lx->len && lx->src[lx->pos] != '\n')
                lx->pos++;
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            lx->pos++;
        } else {
            break;
        }
    }
}

static int peek(Lexer *lx)
{
    skip_ws(lx);
    return lx->pos < lx->len ? lx->src[lx->pos] : EOF;
}

static void expect(Lexer *lx, char c)
{
    if (peek(lx) != c)
        die("malformed model file");
    lx->pos++;
}

static int token(Lexer *lx, char *out, size_t cap)
{
    skip_ws(lx);
    size_t n = 0;
    while (lx->pos < lx->len) {
        char c = lx->src[lx->pos];
        if (c == '(' || c == ')' || c == ';' || c == ' ' || c == '\t' ||
            c == '\n' || c == '\r')
            break;
        if (n + 1 < cap)
            out[n++] = c;
        lx->pos++;
    }
    out[n] = 0;
    return n > 0;
}

static bool parse_bool_token(const char *tok)
{
    if (strcmp(tok, "#t") == 0)
        return true;
    if (strcmp(tok, "#f") == 0)
        return false;
    die("expected a boolean");
    return false;
}

/* ---- model ------------------------------------------------------------- */

static int find_node(Net *net, const char *name)
{
    for (int i = 0; i < net->nnodes; i++)
        if (strcmp(net->nodes[i].name, name) == 0)
            return i;
    return -1;
}

/* CPT leaves are stored in nested-list order: at each level the true branch
 * comes first, so the flattened index uses bit 0 for a true parent. */
static void parse_cpt(Lexer *lx, double *leaves, int depth, int *count)
{
    if (peek(lx) == '(') {
        expect(lx, '(');
        parse_cpt(lx, leaves, depth + 1, count);
        parse_cpt(lx, leaves, depth + 1, count);
        expect(lx, ')');
    } else {
        char tok[64];
        if (!token(lx, tok, sizeof tok))
            die("malformed CPT");
        leaves[(*count)++] = strtod(tok, NULL);
    }
}

static char decl_names[MAX_NODES][MAX_NAME];
static char decl_parents[MAX_NODES][MAX_PARENTS][MAX_NAME];
static int decl_nparents[MAX_NODES];
static double *decl_cpt[MAX_NODES];
static int decl_count;

static void read_model(const char *path, Net *net)
{
    FILE *f = fopen(path, "r");
    if (!f)
        die("cannot open model file");
    static char buf[1 << 20];
    size_t n = fread(buf, 1, sizeof buf - 1, f);
    fclose(f);
    buf[n] = 0;

    Lexer lx = {buf, 0, n};
    char arr_names[MAX_NODES][MAX_NAME];
    int arr_len[MAX_NODES];
    int narr = 0;
    char ev_names[MAX_NODES][MAX_NAME];
    bool *ev_vals[MAX_NODES];
    int ev_scalarv[MAX_NODES]; /* -1: list, 0/1: broadcast */
    int ev_listlen[MAX_NODES];
    int nev = 0;
    char query_name[MAX_NAME] = "";
    int query_index = -1;
    decl_count = 0;

    while (peek(&lx) != EOF) {
        expect(&lx, '(');
        char head[64], tok[MAX_NAME];
        token(&lx, head, sizeof head);
        if (strcmp(head, "node") == 0) {
            if (decl_count >= MAX_NODES)
                die("too many nodes");
            token(&lx, decl_names[decl_count], MAX_NAME);
            expect(&lx, '(');
            token(&lx, tok, sizeof tok); /* "parents" */
            int np = 0;
            while (peek(&lx) != ')') {
                token(&lx, decl_parents[decl_count][np], MAX_NAME);
                if (++np > MAX_PARENTS)
                    die("too many parents");
            }
            expect(&lx, ')');
            decl_nparents[decl_count] = np;
            expect(&lx, '(');
            token(&lx, tok, sizeof tok); /* "cpt" */
            int leaves = 1 << np;
            decl_cpt[decl_count] = (double *)malloc(sizeof(double) * leaves);
            int count = 0;
            parse_cpt(&lx, decl_cpt[decl_count], 0, &count);
            if (count != leaves)
                die("CPT size does not match parent count");
            expect(&lx, ')');
            decl_count++;
        } else if (strcmp(head, "array") == 0) {
            token(&lx, arr_names[narr], MAX_NAME);
            token(&lx, tok, sizeof tok);
            arr_len[narr] = atoi(tok);
            narr++;
        } else if (strcmp(head, "evidence") == 0) {
            token(&lx, ev_names[nev], MAX_NAME);
            if (peek(&lx) == '(') {
                expect(&lx, '(');
                int cap = 1024, cnt = 0;
                bool *vals = (bool *)malloc(cap);
                while (peek(&lx) != ')') {
                    token(&lx, tok, sizeof tok);
                    if (cnt == cap)
                        vals = (bool *)realloc(vals, cap *= 2);
                    vals[cnt++] = parse_bool_token(tok);
                }
                expect(&lx, ')');
                ev_vals[nev] = vals;
                ev_scalarv[nev] = -1;
                ev_listlen[nev] = cnt;
            } else {
                token(&lx, tok, sizeof tok);
                ev_vals[nev] = NULL;
                ev_scalarv[nev] = parse_bool_token(tok) ? 1 : 0;
                ev_listlen[nev] = 0;
            }
            nev++;
        } else if (strcmp(head, "query") == 0) {
            token(&lx, query_name, MAX_NAME);
            if (peek(&lx) != ')') {
                token(&lx, tok, sizeof tok);
                query_index = atoi(tok);
            }
        } else {
            die("unknown declaration");
        }
        expect(&lx, ')');
    }

    /* topological order, declaration-order tiebreak */
    bool placed[MAX_NODES] = {false};
    net->nnodes = 0;
    while (net->nnodes < decl_count) {
        bool progressed = false;
        for (int d = 0; d < decl_count; d++) {
            if (placed[d])
                continue;
            bool ready = true;
            for (int p = 0; p < decl_nparents[d]; p++) {
                int found = -1;
                for (int q = 0; q < decl_count; q++)
                    if (placed[q] && strcmp(decl_names[q], decl_parents[d][p]) == 0)
                        found = q;
                if (found < 0)
                    ready = false;
            }
            if (!ready)
                continue;
            Node *node = &net->nodes[net->nnodes];
            memset(node, 0, sizeof *node);
            strcpy(node->name, decl_names[d]);
            node->nparents = decl_nparents[d];
            node->cpt = decl_cpt[d];
            node->len = 1;
            for (int a = 0; a < narr; a++)
                if (strcmp(arr_names[a], decl_names[d]) == 0) {
                    node->is_array = true;
                    node->len = arr_len[a];
                }
            node->values = (bool *)calloc(node->len, 1);
            placed[d] = true;
            net->nnodes++;
            progressed = true;
        }
        if (!progressed)
            die("cycle in model");
    }
    /* resolve parent/child indices against the topological order */
    for (int d = 0; d < decl_count; d++) {
        int i = find_node(net, decl_names[d]);
        for (int p = 0; p < decl_nparents[d]; p++) {
            int pi = find_node(net, decl_parents[d][p]);
            if (pi < 0)
                die("unknown parent");
            net->nodes[i].parents[p] = pi;
        }
    }
    for (int i = 0; i < net->nnodes; i++)
        for (int p = 0; p < net->nodes[i].nparents; p++) {
            Node *parent = &net->nodes[net->nodes[i].parents[p]];
            parent->children[parent->nchildren++] = i;
        }
    /* children in topological order, matching the toolchain's lists */
    for (int i = 0; i < net->nnodes; i++) {
        Node *node = &net->nodes[i];
        for (int a = 0; a < node->nchildren; a++)
            for (int b = a + 1; b < node->nchildren; b++)
                if (node->children[b] < node->children[a]) {
                    int t = node->children[a];
                    node->children[a] = node->children[b];
                    node->children[b] = t;
                }
    }

    for (int e = 0; e < nev; e++) {
        int i = find_node(net, ev_names[e]);
        if (i < 0)
            die("evidence for unknown node");
        Node *node = &net->nodes[i];
        node->has_evidence = true;
        node->evidence = (bool *)malloc(node->len);
        if (ev_scalarv[e] >= 0) {
            for (int k = 0; k < node->len; k++)
                node->evidence[k] = ev_scalarv[e] == 1;
        } else {
            if (ev_listlen[e] != node->len)
                die("evidence length mismatch");
            memcpy(node->evidence, ev_vals[e], node->len);
            free(ev_vals[e]);
        }
    }

    net->query = find_node(net, query_name);
    if (net->query < 0)
        die("query references unknown node");
    net->query_index = query_index < 0 ? 0 : query_index;
}

/* ---- generic graph-walking operations ----------------------------------- */

static bool value_at(const Net *net, int n, int i)
{
    const Node *node = &net->nodes[n];
    return node->has_evidence ? node->evidence[i] : node->values[i];
}

/* P(node = true | parents), element i; scalar parents broadcast. */
static double true_cp(const Net *net, int n, int i)
{
    const Node *node = &net->nodes[n];
    int idx = 0;
    for (int p = 0; p < node->nparents; p++) {
        int pi = node->parents[p];
        bool v = value_at(net, pi, net->nodes[pi].is_array ? i : 0);
        idx = idx * 2 + (v ? 0 : 1);
    }
    return node->cpt[idx];
}

static double cp_at(const Net *net, int n, int i)
{
    double base = true_cp(net, n, i);
    return value_at(net, n, i) ? base : 1 - base;
}

/* probability of the node's current value(s); left fold from 1.0 */
static double node_weight(const Net *net, int n)
{
    const Node *node = &net->nodes[n];
    if (!node->is_array)
        return cp_at(net, n, 0);
    double w = 1.0;
    for (int i = 0; i < node->len; i++)
        w = w * cp_at(net, n, i);
    return w;
}

/* right fold, matching the recursive list traversal in the algorithms */
static double joint_score(const Net *net)
{
    double w = 1.0;
    for (int j = net->nnodes - 1; j >= 0; j--)
        w = node_weight(net, j) * w;
    return w;
}

static double blanket_scalar(const Net *net, int n)
{
    const Node *node = &net->nodes[n];
    double w = 1.0;
    for (int j = node->nchildren - 1; j >= 0; j--) {
        int c = node->children[j];
        double cw = net->nodes[c].is_array ? node_weight(net, c) : cp_at(net, c, 0);
        w = cw * w;
    }
    return cp_at(net, n, 0) * w;
}

static double blanket_elem(const Net *net, int n, int i)
{
    const Node *node = &net->nodes[n];
    double w = 1.0;
    for (int j = node->nchildren - 1; j >= 0; j--)
        w = cp_at(net, node->children[j], i) * w;
    return cp_at(net, n, i) * w;
}

static void sample_node(Net *net, simpl_rng *rng, int n)
{
    Node *node = &net->nodes[n];
    for (int i = 0; i < node->len; i++)
        node->values[i] = simpl_flip(rng, true_cp(net, n, i));
}

static double evidence_weight(const Net *net)
{
    /* foldl (f elem acc): w = node_weight(ev) * w over evidence, topo order */
    double w = 1.0;
    for (int n = 0; n < net->nnodes; n++)
        if (net->nodes[n].has_evidence)
            w = node_weight(net, n) * w;
    return w;
}

static void normalize2(double *counts)
{
    double s = 0.0;
    s += counts[0];
    s += counts[1];
    if (s == 0.0)
        simpl_fail("normalize: weight vector sums to zero", 9);
    counts[0] = counts[0] / s;
    counts[1] = counts[1] / s;
}

static int query_bin(const Net *net)
{
    return value_at(net, net->query, net->query_index) ? 0 : 1;
}

/* ---- algorithms ----------------------------------------------------------- */

static void init_state(Net *net, simpl_rng *rng)
{
    for (int n = 0; n < net->nnodes; n++)
        if (!net->nodes[n].has_evidence)
            sample_node(net, rng, n);
    double score = joint_score(net);
    for (int r = 0; r < 100; r++) {
        if (!(score > 0)) {
            for (int n = 0; n < net->nnodes; n++)
                if (!net->nodes[n].has_evidence)
                    sample_node(net, rng, n);
            score = joint_score(net);
        }
    }
    if (!(score > 0))
        simpl_fail("require-positive: value is not positive", 9);
}

static void run_likelihood(Net *net, simpl_rng *rng, int64_t N, double *counts)
{
    for (int64_t s = 0; s < N; s++) {
        for (int n = 0; n < net->nnodes; n++)
            if (!net->nodes[n].has_evidence)
                sample_node(net, rng, n);
        int idx = query_bin(net);
        counts[idx] = counts[idx] + evidence_weight(net);
    }
    normalize2(counts);
}

static double run_rejection(Net *net, simpl_rng *rng, int64_t N, double *counts)
{
    for (int64_t s = 0; s < N; s++) {
        bool ok = true;
        for (int n = 0; n < net->nnodes; n++) {
            Node *node = &net->nodes[n];
            if (node->has_evidence) {
                for (int i = 0; i < node->len; i++)
                    if (simpl_flip(rng, true_cp(net, n, i)) != node->evidence[i])
                        ok = false;
            } else {
                sample_node(net, rng, n);
            }
        }
        if (ok) {
            int idx = query_bin(net);
            counts[idx] = counts[idx] + 1;
        }
    }
    double total = counts[0] + counts[1];
    if (!(total > 0))
        simpl_fail("require-positive: value is not positive", 9);
    double t = counts[0];
    counts[0] = t / total;
    counts[1] = (total - t) / total;
    return total;
}

static void mh_update_scalar(Net *net, simpl_rng *rng, int n)
{
    Node *node = &net->nodes[n];
    bool old = node->values[0];
    double before = blanket_scalar(net, n);
    node->values[0] = !old;
    double after = blanket_scalar(net, n);
    if (!(before > 0))
        simpl_fail("require-positive: value is not positive", 9);
    double ratio = after / before;
    double accept = ratio < 1 ? ratio : 1;
    if (!simpl_flip(rng, accept))
        node->values[0] = old;
}

static void mh_update_elem(Net *net, simpl_rng *rng, int n, int i)
{
    Node *node = &net->nodes[n];
    bool old = node->values[i];
    double before = blanket_elem(net, n, i);
    node->values[i] = !old;
    double after = blanket_elem(net, n, i);
    if (!(before > 0))
        simpl_fail("require-positive: value is not positive", 9);
    double ratio = after / before;
    double accept = ratio < 1 ? ratio : 1;
    if (!simpl_flip(rng, accept))
        node->values[i] = old;
}

static void run_mh(Net *net, simpl_rng *rng, int64_t N, int64_t burn, double *counts)
{
    init_state(net, rng);
    int64_t sites = 0;
    for (int n = 0; n < net->nnodes; n++)
        if (!net->nodes[n].has_evidence)
            sites += net->nodes[n].len;
    for (int64_t step = 0; step < N; step++) {
        int64_t idx = simpl_random_index(rng, sites);
        int64_t lo = 0;
        for (int n = 0; n < net->nnodes; n++) {
            Node *node = &net->nodes[n];
            if (node->has_evidence)
                continue;
            if (!node->is_array) {
                if (idx == lo)
                    mh_update_scalar(net, rng, n);
                lo += 1;
            } else {
                if (idx >= lo && idx < lo + node->len)
                    mh_update_elem(net, rng, n, (int)(idx - lo));
                lo += node->len;
            }
        }
        if (step >= burn) {
            int bin = query_bin(net);
            counts[bin] = counts[bin] + 1;
        }
    }
    normalize2(counts);
}

static void gibbs_update(Net *net, simpl_rng *rng, int n, int i, bool scalar)
{
    Node *node = &net->nodes[n];
    node->values[i] = true;
    double p1 = scalar ? blanket_scalar(net, n) : blanket_elem(net, n, i);
    node->values[i] = false;
    double p0 = scalar ? blanket_scalar(net, n) : blanket_elem(net, n, i);
    double total = p1 + p0;
    if (!(total > 0))
        simpl_fail("require-positive: value is not positive", 9);
    node->values[i] = simpl_flip(rng, p1 / total);
}

static void run_gibbs(Net *net, simpl_rng *rng, int64_t N, int64_t burn, double *counts)
{
    init_state(net, rng);
    for (int64_t sweep = 0; sweep < N; sweep++) {
        for (int n = 0; n < net->nnodes; n++) {
            Node *node = &net->nodes[n];
            if (node->has_evidence)
                continue;
            if (!node->is_array) {
                gibbs_update(net, rng, n, 0, true);
            } else {
                for (int i = 0; i < node->len; i++)
                    gibbs_update(net, rng, n, i, false);
            }
        }
        if (sweep >= burn) {
            int bin = query_bin(net);
            counts[bin] = counts[bin] + 1;
        }
    }
    normalize2(counts);
}

/* ---- entry ------------------------------------------------------------------ */

static void cpt_selftest(const Net *net)
{
    /* print P(node = true | tuple) for every parent-value tuple, walked
     * through the same runtime machinery the samplers use */
    Net scratch = *net;
    printf("{");
    for (int n = 0; n < net->nnodes; n++) {
        Node *node = &scratch.nodes[n];
        if (n)
            printf(",");
        printf("\"%s\":[", node->name);
        int np = node->nparents;
        for (int mask = 0; mask < (1 << np); mask++) {
            for (int p = 0; p < np; p++) {
                int pi = node->parents[p];
                Node *parent = &scratch.nodes[pi];
                bool v = ((mask >> (np - 1 - p)) & 1) == 0; /* bit 0 = true */
                if (parent->has_evidence)
                    parent->evidence[0] = v;
                else
                    parent->values[0] = v;
            }
            printf("%s%.17g", mask ? "," : "", true_cp(&scratch, n, 0));
        }
        printf("]");
    }
    printf("}\n");
}

int main(int argc, char **argv)
{
    if (argc >= 4 && strcmp(argv[1], "rngdump") == 0) {
        simpl_rng rng = {strtoull(argv[2], NULL, 10), 0};
        long long k = atoll(argv[3]);
        for (long long i = 0; i < k; i++)
            simpl_next(&rng);
        printf("{\"state\":%llu,\"draws\":%llu}\n",
               (unsigned long long)rng.state, (unsigned long long)rng.draws);
        return 0;
    }
    if (argc >= 3 && strcmp(argv[1], "cpt-selftest") == 0) {
        static Net net;
        read_model(argv[2], &net);
        cpt_selftest(&net);
        return 0;
    }
    if (argc < 5) {
        fprintf(stderr,
                "usage: %s <model.bn> <rejection|likelihood|mh|gibbs> <seed> <N> [burn]\n",
                argv[0]);
        return 2;
    }
    static Net net;
    read_model(argv[1], &net);
    const char *algo = argv[2];
    uint64_t seed = strtoull(argv[3], NULL, 10);
    int64_t N = atoll(argv[4]);
    int64_t burn = argc > 5 ? atoll(argv[5]) : 0;
    simpl_rng rng = {seed, 0};
    double counts[2] = {0, 0};
    double accepted = -1;

    int64_t t0 = simpl_now_ns();
    if (strcmp(algo, "likelihood") == 0)
        run_likelihood(&net, &rng, N, counts);
    else if (strcmp(algo, "rejection") == 0)
        accepted = run_rejection(&net, &rng, N, counts);
    else if (strcmp(algo, "mh") == 0)
        run_mh(&net, &rng, N, burn, counts);
    else if (strcmp(algo, "gibbs") == 0)
        run_gibbs(&net, &rng, N, burn, counts);
    else {
        fprintf(stderr, "unknown algorithm %s\n", algo);
        return 2;
    }
    int64_t t1 = simpl_now_ns();

    printf("{\"estimate\":[%.17g,%.17g", counts[0], counts[1]);
    if (accepted >= 0)
        printf(",%.17g", accepted);
    printf("],\"flips\":%llu,\"elapsed_ns\":%lld}\n",
           (unsigned long long)rng.draws, (long long)(t1 - t0));
    return 0;
}
