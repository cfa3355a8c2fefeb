/* Handcoded baseline over the simpler model structure: every node holds
 * exactly one boolean value, stored inline along with a fixed-size CPT.
 * Models declaring value arrays are rejected. The sampling order matches
 * the general baseline, so estimates agree bit for bit on scalar models;
 * only the data-structure overhead differs.
 *
 * Usage: simpl_baseline_simple <model.bn> <algo> <seed> <N> [burn]
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
    double cpt[1 << MAX_PARENTS];
    bool value;
    bool has_evidence;
    bool evidence;
} Node;

static Node nodes[MAX_NODES];
static int nnodes;
static int query;

static void die(const char *msg)
{
    fprintf(stderr, "simpl_baseline_simple: %s\n", msg);
    exit(4);
}

/* ---- minimal reader ------------------------------------------------------ */

static const char *src_text;
static size_t src_pos, src_len;

static int peek(void)
{
    for (;;) {
        if (src_pos >= src_len)
            return EOF;
        char c = src_text[src_pos];
        if (c == ';') {
            while (src_pos < src_len && src_text[src_pos] != '\n')
                src_pos++;
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            src_pos++;
        } else {
            return c;
        }
    }
}

static void expect(char c)
{
    if (peek() != c)
        die("malformed model file");
    src_pos++;
}

static int token(char *out, size_t cap)
{
    peek();
    size_t n = 0;
    while (src_pos < src_len) {
        char c = src_text[src_pos];
        if (c == '(' || c == ')' || c == ';' || c == ' ' || c == '\t' ||
            c == '\n' || c == '\r')
            break;
        if (n + 1 < cap)
            out[n++] = c;
        src_pos++;
    }
    out[n] = 0;
    return n > 0;
}

static int find_node(const char *name)
{
    for (int i = 0; i < nnodes; i++)
        if (strcmp(nodes[i].name, name) == 0)
            return i;
    return -1;
}

static void parse_cpt(double *leaves, int *count)
{
    if (peek() == '(') {
        expect('(');
        parse_cpt(leaves, count);
        parse_cpt(leaves, count);
        expect(')');
    } else {
        char tok[64];
        token(tok, sizeof tok);
        leaves[(*count)++] = strtod(tok, NULL);
    }
}

static char decl_names[MAX_NODES][MAX_NAME];
static char decl_parents[MAX_NODES][MAX_PARENTS][MAX_NAME];
static int decl_nparents[MAX_NODES];
static double decl_cpt[MAX_NODES][1 << MAX_PARENTS];
static int decl_count;

static void read_model(const char *path)
{
    FILE *f = fopen(path, "r");
    if (!f)
        die("cannot open model file");
    static char buf[1 << 20];
    src_len = fread(buf, 1, sizeof buf - 1, f);
    fclose(f);
    buf[src_len] = 0;
    src_text = buf;
    src_pos = 0;

    char ev_names[MAX_NODES][MAX_NAME];
    bool ev_vals[MAX_NODES];
    int nev = 0;
    char query_name[MAX_NAME] = "";

    while (peek() != EOF) {
        expect('(');
        char head[64], tok[MAX_NAME];
        token(head, sizeof head);
        if (strcmp(head, "node") == 0) {
            token(decl_names[decl_count], MAX_NAME);
            expect('(');
            token(tok, sizeof tok);
            int np = 0;
            while (peek() != ')')
                token(decl_parents[decl_count][np++], MAX_NAME);
            expect(')');
            decl_nparents[decl_count] = np;
            expect('(');
            token(tok, sizeof tok);
            int count = 0;
            parse_cpt(decl_cpt[decl_count], &count);
            if (count != (1 << np))
                die("CPT size does not match parent count");
            expect(')');
            decl_count++;
        } else if (strcmp(head, "array") == 0) {
            die("array-valued nodes need the general model structure");
        } else if (strcmp(head, "evidence") == 0) {
            token(ev_names[nev], MAX_NAME);
            token(tok, sizeof tok);
            if (strcmp(tok, "#t") == 0)
                ev_vals[nev] = true;
            else if (strcmp(tok, "#f") == 0)
                ev_vals[nev] = false;
            else
                die("per-index evidence needs the general model structure");
            nev++;
        } else if (strcmp(head, "query") == 0) {
            token(query_name, MAX_NAME);
            if (peek() != ')')
                die("query index needs the general model structure");
        } else {
            die("unknown declaration");
        }
        expect(')');
    }

    bool placed[MAX_NODES] = {false};
    nnodes = 0;
    while (nnodes < decl_count) {
        bool progressed = false;
        for (int d = 0; d < decl_count; d++) {
            if (placed[d])
                continue;
            bool ready = true;
            for (int p = 0; p < decl_nparents[d]; p++) {
                bool found = false;
                for (int q = 0; q < decl_count; q++)
                    if (placed[q] && strcmp(decl_names[q], decl_parents[d][p]) == 0)
                        found = true;
                if (!found)
                    ready = false;
            }
            if (!ready)
                continue;
            Node *node = &nodes[nnodes];
            memset(node, 0, sizeof *node);
            strcpy(node->name, decl_names[d]);
            node->nparents = decl_nparents[d];
            memcpy(node->cpt, decl_cpt[d], sizeof(double) << decl_nparents[d]);
            placed[d] = true;
            nnodes++;
            progressed = true;
        }
        if (!progressed)
            die("cycle in model");
    }
    for (int d = 0; d < decl_count; d++) {
        int i = find_node(decl_names[d]);
        for (int p = 0; p < decl_nparents[d]; p++)
            nodes[i].parents[p] = find_node(decl_parents[d][p]);
    }
    for (int i = 0; i < nnodes; i++)
        for (int p = 0; p < nodes[i].nparents; p++) {
            Node *parent = &nodes[nodes[i].parents[p]];
            parent->children[parent->nchildren++] = i;
        }
    for (int i = 0; i < nnodes; i++)
        for (int a = 0; a < nodes[i].nchildren; a++)
            for (int b = a + 1; b < nodes[i].nchildren; b++)
                if (nodes[i].children[b] < nodes[i].children[a]) {
                    int t = nodes[i].children[a];
                    nodes[i].children[a] = nodes[i].children[b];
                    nodes[i].children[b] = t;
                }
    for (int e = 0; e < nev; e++) {
        int i = find_node(ev_names[e]);
        if (i < 0)
            die("evidence for unknown node");
        nodes[i].has_evidence = true;
        nodes[i].evidence = ev_vals[e];
    }
    query = find_node(query_name);
    if (query < 0)
        die("query references unknown node");
}

/* ---- inference over the inline representation ------------------------------- */

static bool value_of(int n)
{
    return nodes[n].has_evidence ? nodes[n].evidence : nodes[n].value;
}

static double true_cp(int n)
{
    const Node *node = &nodes[n];
    int idx = 0;
    for (int p = 0; p < node->nparents; p++)
        idx = idx * 2 + (value_of(node->parents[p]) ? 0 : 1);
    return node->cpt[idx];
}

static double cp(int n)
{
    double base = true_cp(n);
    return value_of(n) ? base : 1 - base;
}

static double joint_score(void)
{
    double w = 1.0;
    for (int j = nnodes - 1; j >= 0; j--)
        w = cp(j) * w;
    return w;
}

static double blanket(int n)
{
    const Node *node = &nodes[n];
    double w = 1.0;
    for (int j = node->nchildren - 1; j >= 0; j--)
        w = cp(node->children[j]) * w;
    return cp(n) * w;
}

static double evidence_weight(void)
{
    double w = 1.0;
    for (int n = 0; n < nnodes; n++)
        if (nodes[n].has_evidence)
            w = cp(n) * w;
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

static void init_state(simpl_rng *rng)
{
    for (int n = 0; n < nnodes; n++)
        if (!nodes[n].has_evidence)
            nodes[n].value = simpl_flip(rng, true_cp(n));
    double score = joint_score();
    for (int r = 0; r < 100; r++) {
        if (!(score > 0)) {
            for (int n = 0; n < nnodes; n++)
                if (!nodes[n].has_evidence)
                    nodes[n].value = simpl_flip(rng, true_cp(n));
            score = joint_score();
        }
    }
    if (!(score > 0))
        simpl_fail("require-positive: value is not positive", 9);
}

static void run_likelihood(simpl_rng *rng, int64_t N, double *counts)
{
    for (int64_t s = 0; s < N; s++) {
        for (int n = 0; n < nnodes; n++)
            if (!nodes[n].has_evidence)
                nodes[n].value = simpl_flip(rng, true_cp(n));
        int idx = value_of(query) ? 0 : 1;
        counts[idx] = counts[idx] + evidence_weight();
    }
    normalize2(counts);
}

static double run_rejection(simpl_rng *rng, int64_t N, double *counts)
{
    for (int64_t s = 0; s < N; s++) {
        bool ok = true;
        for (int n = 0; n < nnodes; n++) {
            if (nodes[n].has_evidence) {
                if (simpl_flip(rng, true_cp(n)) != nodes[n].evidence)
                    ok = false;
            } else {
                nodes[n].value = simpl_flip(rng, true_cp(n));
            }
        }
        if (ok) {
            int idx = value_of(query) ? 0 : 1;
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

static void run_mh(simpl_rng *rng, int64_t N, int64_t burn, double *counts)
{
    init_state(rng);
    int64_t sites = 0;
    for (int n = 0; n < nnodes; n++)
        if (!nodes[n].has_evidence)
            sites++;
    for (int64_t step = 0; step < N; step++) {
        int64_t idx = simpl_random_index(rng, sites);
        int64_t lo = 0;
        for (int n = 0; n < nnodes; n++) {
            if (nodes[n].has_evidence)
                continue;
            if (idx == lo) {
                bool old = nodes[n].value;
                double before = blanket(n);
                nodes[n].value = !old;
                double after = blanket(n);
                if (!(before > 0))
                    simpl_fail("require-positive: value is not positive", 9);
                double ratio = after / before;
                if (!simpl_flip(rng, ratio < 1 ? ratio : 1))
                    nodes[n].value = old;
            }
            lo++;
        }
        if (step >= burn) {
            int bin = value_of(query) ? 0 : 1;
            counts[bin] = counts[bin] + 1;
        }
    }
    normalize2(counts);
}

static void run_gibbs(simpl_rng *rng, int64_t N, int64_t burn, double *counts)
{
    init_state(rng);
    for (int64_t sweep = 0; sweep < N; sweep++) {
        for (int n = 0; n < nnodes; n++) {
            if (nodes[n].has_evidence)
                continue;
            nodes[n].value = true;
            double p1 = blanket(n);
            nodes[n].value = false;
            double p0 = blanket(n);
            double total = p1 + p0;
            if (!(total > 0))
                simpl_fail("require-positive: value is not positive", 9);
            nodes[n].value = simpl_flip(rng, p1 / total);
        }
        if (sweep >= burn) {
            int bin = value_of(query) ? 0 : 1;
            counts[bin] = counts[bin] + 1;
        }
    }
    normalize2(counts);
}

int main(int argc, char **argv)
{
    if (argc < 5) {
        fprintf(stderr,
                "usage: %s <model.bn> <rejection|likelihood|mh|gibbs> <seed> <N> [burn]\n",
                argv[0]);
        return 2;
    }
    read_model(argv[1]);
    const char *algo = argv[2];
    uint64_t seed = strtoull(argv[3], NULL, 10);
    int64_t N = atoll(argv[4]);
    int64_t burn = argc > 5 ? atoll(argv[5]) : 0;
    simpl_rng rng = {seed, 0};
    double counts[2] = {0, 0};
    double accepted = -1;

    int64_t t0 = simpl_now_ns();
    if (strcmp(algo, "likelihood") == 0)
        run_likelihood(&rng, N, counts);
    else if (strcmp(algo, "rejection") == 0)
        accepted = run_rejection(&rng, N, counts);
    else if (strcmp(algo, "mh") == 0)
        run_mh(&rng, N, burn, counts);
    else if (strcmp(algo, "gibbs") == 0)
        run_gibbs(&rng, N, burn, counts);
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
