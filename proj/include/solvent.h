/* C interface to the solver library. Handles are opaque; every call that can
 * fail returns an error code and leaves a message in solvent_last_error(). */
#ifndef SOLVENT_H
#define SOLVENT_H

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes. >= 10 so callers can reuse them directly as exit codes
 * (0, 1, 2 are reserved for Win / Loss / Unknown results). */
enum {
    SOLVENT_OK = 0,
    SOLVENT_FAIL = 1, /* solvent_verify_tree: tree rejected */
    SOLVENT_E_USAGE = 10,
    SOLVENT_E_IO = 11,
    SOLVENT_E_PROTOCOL = 12,
    SOLVENT_E_INTERNAL = 13,
    SOLVENT_E_RUNTIME = 14
};

enum {
    SOLVENT_WIN = 0,
    SOLVENT_LOSS = 1,
    SOLVENT_UNKNOWN = 2
};

typedef struct solvent_config solvent_config;
typedef struct solvent_result solvent_result;

/* Configuration is a key=value store; the same keys work in config files.
 * Run keys: game, opening, mode, transport, workers, seed, vthr, k, c_puct,
 * v_max, budget, and_assignment, loss_positions, wall_limit_s, checkpoint,
 * solution_out, events_out, metrics_out, chaos.*, trainer.*.
 * Pretrain keys: pretrain.{opening,out,metrics,games,steps,rounds,batch,lr,
 * hidden,init_seed,resume,seed,sims_per_move}.
 * Compare keys: compare.{openings,modes,seeds,ablation,pretrain_from}. */
solvent_config* solvent_config_new(void);
void solvent_config_free(solvent_config* cfg);
int solvent_config_set(solvent_config* cfg, const char* key, const char* value);
int solvent_config_load_file(solvent_config* cfg, const char* path);

/* Runs one solve. On SOLVENT_OK, *out owns the result (free it). Side
 * artifacts (solution tree, event log, metrics) go to the configured paths. */
int solvent_solve(solvent_config* cfg, solvent_result** out);

/* Pre-trains a network for the configured game and writes the checkpoint
 * plus a step,loss metrics CSV to the pretrain.* paths. */
int solvent_pretrain(solvent_config* cfg);

/* Checks a solution-tree file. SOLVENT_OK on pass; SOLVENT_FAIL with the
 * first violation in solvent_last_error(); >= 10 on unreadable input.
 * game may be NULL to accept whatever game the file declares. */
int solvent_verify_tree(const char* path, const char* game);

/* Repeats the configured solve across one axis ("vthr" or "workers";
 * values comma-separated) and writes the sweep CSV to out_path. */
int solvent_sweep(solvent_config* cfg, const char* axis, const char* values,
                  const char* out_path);

/* Opening x mode x seed grid. Writes <prefix>_table.csv, <prefix>_runs.csv,
 * and <prefix>_critical.csv. */
int solvent_compare(solvent_config* cfg, const char* out_prefix);

int solvent_result_outcome(const solvent_result* res); /* SOLVENT_WIN/... */
const char* solvent_result_stats_row(const solvent_result* res);
const char* solvent_stats_header(void);
void solvent_result_free(solvent_result* res);

/* Message from the most recent failing call on this thread. */
const char* solvent_last_error(void);

#ifdef __cplusplus
}
#endif

#endif
