/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_gradreport_free: (a: number, b: number) => void;
export const __wbg_pursuitstepper_free: (a: number, b: number) => void;
export const __wbg_signaltrainer_free: (a: number, b: number) => void;
export const gradreport_encoder_updates: (a: number, b: number) => [number, number];
export const gradreport_expected: (a: number, b: number) => [number, number];
export const gradreport_matrix: (a: number, b: number) => [number, number];
export const gradreport_n_agents: (a: number) => number;
export const gradreport_n_wirings: (a: number) => number;
export const gradreport_name: (a: number, b: number) => [number, number];
export const gradreport_new: (a: number, b: bigint) => [number, number, number];
export const gradreport_ok: (a: number, b: number) => number;
export const gradreport_text: (a: number) => [number, number];
export const pursuitstepper_done: (a: number) => number;
export const pursuitstepper_grid: (a: number) => number;
export const pursuitstepper_last_reward: (a: number) => number;
export const pursuitstepper_n_predators: (a: number) => number;
export const pursuitstepper_new: (a: number, b: bigint) => [number, number, number];
export const pursuitstepper_predators: (a: number) => [number, number];
export const pursuitstepper_prey: (a: number) => [number, number];
export const pursuitstepper_reset: (a: number) => void;
export const pursuitstepper_step: (a: number, b: number, c: number) => [number, number, number];
export const pursuitstepper_step_random: (a: number) => [number, number, number];
export const pursuitstepper_steps: (a: number) => number;
export const pursuitstepper_total_return: (a: number) => number;
export const signaltrainer_episodes: (a: number) => bigint;
export const signaltrainer_epsilon: (a: number) => number;
export const signaltrainer_evaluate: (a: number, b: number) => [number, number, number];
export const signaltrainer_new: (a: number, b: bigint) => [number, number, number];
export const signaltrainer_train: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
