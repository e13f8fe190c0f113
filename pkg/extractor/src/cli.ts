#!/usr/bin/env node
/**
 * mlm-extractor: bridge between pretrained masked LMs and the probing
 * pipeline's file formats.
 *
 *   extract --model M --conllu F --out B [--pooling mean|first] [--mock]
 *   pll     --model M --items J [--whole-word] [--mock]
 *   parse   --text T --out F --cmd "<external parser command>"
 *
 * Exit codes: 0 ok, 1 usage/validation, 2 runtime failure.
 */

import { promises as fs } from 'node:fs';

import type { MaskedLM } from './backend.js';
import { loadTransformersBackend } from './backend.js';
import { parseConllu, toConllu } from './conllu.js';
import { extractEmbeddings } from './extract.js';
import { mockBackend } from './mock.js';
import { scoreItems, type ItemsManifest } from './pll.js';
import { parseText } from './parse.js';

interface Flags {
  [key: string]: string | boolean;
}

function parseArgs(argv: string[]): { command: string; flags: Flags } {
  const [command, ...rest] = argv;
  const flags: Flags = {};
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (!arg.startsWith('--')) throw new UsageError(`unexpected argument ${arg}`);
    const name = arg.slice(2);
    if (i + 1 < rest.length && !rest[i + 1].startsWith('--')) {
      flags[name] = rest[++i];
    } else {
      flags[name] = true;
    }
  }
  return { command: command ?? '', flags };
}

class UsageError extends Error {}

function requireString(flags: Flags, name: string): string {
  const value = flags[name];
  if (typeof value !== 'string' || value === '') {
    throw new UsageError(`--${name} is required`);
  }
  return value;
}

async function getBackend(flags: Flags): Promise<MaskedLM> {
  if (flags.mock) return mockBackend();
  return loadTransformersBackend(requireString(flags, 'model'));
}

async function cmdExtract(flags: Flags): Promise<number> {
  const conlluPath = requireString(flags, 'conllu');
  const outPath = requireString(flags, 'out');
  const pooling = (flags.pooling as 'mean' | 'first') || 'mean';
  if (pooling !== 'mean' && pooling !== 'first') throw new UsageError(`unknown pooling ${pooling}`);
  const backend = await getBackend(flags);
  const sentences = parseConllu(await fs.readFile(conlluPath, 'utf-8'));
  const result = await extractEmbeddings(backend, sentences, outPath, {
    pooling,
    log: (msg) => console.error(msg),
  });
  console.log(
    `wrote ${result.written} sentences (${result.skipped.length} skipped) from ` +
      `${backend.modelName} (L=${backend.numLayers}, d=${backend.hiddenDim}) -> ${outPath}`,
  );
  return 0;
}

async function cmdPll(flags: Flags): Promise<number> {
  const itemsPath = requireString(flags, 'items');
  const backend = await getBackend(flags);
  const manifest = JSON.parse(await fs.readFile(itemsPath, 'utf-8')) as ItemsManifest;
  if (!Array.isArray(manifest.items)) throw new UsageError(`${itemsPath}: no items array`);
  await scoreItems(backend, manifest, { wholeWord: Boolean(flags['whole-word']) });
  const tmp = `${itemsPath}.tmp`;
  await fs.writeFile(tmp, JSON.stringify(manifest, null, 2) + '\n', 'utf-8');
  await fs.rename(tmp, itemsPath);
  const correct = manifest.items.filter(
    (it) => (it.pll_grammatical ?? -Infinity) > (it.pll_ungrammatical ?? -Infinity),
  ).length;
  console.log(`scored ${manifest.items.length} pairs; grammatical preferred in ${correct}`);
  return 0;
}

async function cmdParse(flags: Flags): Promise<number> {
  const textPath = requireString(flags, 'text');
  const outPath = requireString(flags, 'out');
  const command = requireString(flags, 'cmd').split(' ').filter(Boolean);
  const text = await fs.readFile(textPath, 'utf-8');
  const sentences = parseText(text, command);
  await fs.writeFile(outPath, sentences.map(toConllu).join('\n'), 'utf-8');
  console.log(`parsed ${sentences.length} sentences -> ${outPath}`);
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  try {
    const { command, flags } = parseArgs(argv);
    switch (command) {
      case 'extract':
        return await cmdExtract(flags);
      case 'pll':
        return await cmdPll(flags);
      case 'parse':
        return await cmdParse(flags);
      default:
        throw new UsageError(
          'usage: mlm-extractor <extract|pll|parse> [flags]; see file header for details',
        );
    }
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    console.error(`runtime error: ${err instanceof Error ? err.message : String(err)}`);
    return 2;
  }
}

import { pathToFileURL } from 'node:url';

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
