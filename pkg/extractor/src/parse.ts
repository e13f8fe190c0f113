/**
 * Raw-text parsing through an external dependency parser, treated as a
 * black box: the command receives one sentence per line on stdin and must
 * emit CoNLL-U on stdout. Output is validated by re-parsing.
 */

import { spawnSync } from 'node:child_process';

import { parseConllu, type ConlluSentence } from './conllu.js';

export function parseText(text: string, command: string[]): ConlluSentence[] {
  if (text.trim() === '') return [];
  const [cmd, ...args] = command;
  const result = spawnSync(cmd, args, { input: text, encoding: 'utf-8', maxBuffer: 1 << 28 });
  if (result.error) {
    throw new Error(`external parser failed to start: ${result.error.message}`);
  }
  if (result.status !== 0) {
    throw new Error(`external parser exited with ${result.status}: ${result.stderr?.slice(0, 400)}`);
  }
  return parseConllu(result.stdout);
}
