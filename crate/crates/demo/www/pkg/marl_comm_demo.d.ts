/* tslint:disable */
/* eslint-disable */

/**
 * Encoder gradient norms of every agent loss under three message wirings.
 */
export class GradReport {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Optimizer steps each encoder took for one batch.
     */
    encoder_updates(k: number): Uint32Array;
    expected(k: number): string;
    /**
     * Row-major `[loss i][encoder j]` gradient norms.
     */
    matrix(k: number): Float64Array;
    n_agents(): number;
    n_wirings(): number;
    name(k: number): string;
    constructor(n_agents: number, seed: bigint);
    ok(k: number): boolean;
    text(): string;
}

/**
 * A predator-prey episode driven from the page.
 */
export class PursuitStepper {
    free(): void;
    [Symbol.dispose](): void;
    done(): boolean;
    grid(): number;
    last_reward(): number;
    n_predators(): number;
    /**
     * `small` selects the 5×5 two-predator variant.
     */
    constructor(small: boolean, seed: bigint);
    /**
     * Flattened `(row, col)` of every predator.
     */
    predators(): Uint32Array;
    /**
     * Flattened `(row, col)` of every prey still on the board.
     */
    prey(): Uint32Array;
    reset(): void;
    /**
     * Applies one joint action. Actions: 0 up, 1 down, 2 left, 3 right,
     * 4 stay, 5 catch.
     */
    step(actions: Uint32Array): number;
    /**
     * One step with uniformly random actions.
     */
    step_random(): number;
    steps(): number;
    total_return(): number;
}

/**
 * Independent learners on the signal game, with or without messages.
 */
export class SignalTrainer {
    free(): void;
    [Symbol.dispose](): void;
    episodes(): bigint;
    epsilon(): number;
    /**
     * Mean greedy return over `episodes` evaluation episodes.
     */
    evaluate(episodes: number): number;
    constructor(comm: boolean, seed: bigint);
    /**
     * Trains `episodes` more episodes and returns their mean return.
     */
    train(episodes: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_gradreport_free: (a: number, b: number) => void;
    readonly __wbg_pursuitstepper_free: (a: number, b: number) => void;
    readonly __wbg_signaltrainer_free: (a: number, b: number) => void;
    readonly gradreport_encoder_updates: (a: number, b: number) => [number, number];
    readonly gradreport_expected: (a: number, b: number) => [number, number];
    readonly gradreport_matrix: (a: number, b: number) => [number, number];
    readonly gradreport_n_agents: (a: number) => number;
    readonly gradreport_n_wirings: (a: number) => number;
    readonly gradreport_name: (a: number, b: number) => [number, number];
    readonly gradreport_new: (a: number, b: bigint) => [number, number, number];
    readonly gradreport_ok: (a: number, b: number) => number;
    readonly gradreport_text: (a: number) => [number, number];
    readonly pursuitstepper_done: (a: number) => number;
    readonly pursuitstepper_grid: (a: number) => number;
    readonly pursuitstepper_last_reward: (a: number) => number;
    readonly pursuitstepper_n_predators: (a: number) => number;
    readonly pursuitstepper_new: (a: number, b: bigint) => [number, number, number];
    readonly pursuitstepper_predators: (a: number) => [number, number];
    readonly pursuitstepper_prey: (a: number) => [number, number];
    readonly pursuitstepper_reset: (a: number) => void;
    readonly pursuitstepper_step: (a: number, b: number, c: number) => [number, number, number];
    readonly pursuitstepper_step_random: (a: number) => [number, number, number];
    readonly pursuitstepper_steps: (a: number) => number;
    readonly pursuitstepper_total_return: (a: number) => number;
    readonly signaltrainer_episodes: (a: number) => bigint;
    readonly signaltrainer_epsilon: (a: number) => number;
    readonly signaltrainer_evaluate: (a: number, b: number) => [number, number, number];
    readonly signaltrainer_new: (a: number, b: bigint) => [number, number, number];
    readonly signaltrainer_train: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
