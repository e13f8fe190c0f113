import assert from 'node:assert/strict';
import { test } from 'node:test';
import { mkdtempSync, writeFileSync } from 'node:fs';
import { promises as fs } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { readManifest } from '../src/bundle.js';
import { parseConllu } from '../src/conllu.js';
import { main } from '../src/cli.js';

const CONLLU = `# sent_id = s1
1\tThe\t_\t_\t_\t_\t2\tdet\t_\t_
2\tcats\t_\t_\t_\t_\t3\tnsubj\t_\t_
3\tsleep\t_\t_\t_\t_\t0\troot\t_\t_
`;

test('extract --mock writes a bundle', async () => {
  const dir = mkdtempSync(join(tmpdir(), 'cli-'));
  const conllu = join(dir, 'in.conllu');
  const out = join(dir, 'out.bin');
  writeFileSync(conllu, CONLLU);
  const code = await main(['extract', '--mock', '--conllu', conllu, '--out', out]);
  assert.equal(code, 0);
  const manifest = await readManifest(out);
  assert.equal(manifest.sentences.length, 1);
  await fs.rm(dir, { recursive: true });
});

test('extract with first-subword pooling records the tag', async () => {
  const dir = mkdtempSync(join(tmpdir(), 'cli-'));
  const conllu = join(dir, 'in.conllu');
  const out = join(dir, 'out.bin');
  writeFileSync(conllu, CONLLU);
  const code = await main(['extract', '--mock', '--conllu', conllu, '--out', out, '--pooling', 'first']);
  assert.equal(code, 0);
  assert.equal((await readManifest(out)).pooling, 'first');
  await fs.rm(dir, { recursive: true });
});

test('pll --mock fills the items manifest in place', async () => {
  const dir = mkdtempSync(join(tmpdir(), 'cli-'));
  const items = join(dir, 'items.json');
  writeFileSync(
    items,
    JSON.stringify({
      schema_version: 1,
      items: [
        {
          id: 'item-0001',
          grammatical: 'The cats sleep .',
          ungrammatical: 'The cats sleeps .',
          pll_grammatical: null,
          pll_ungrammatical: null,
        },
      ],
    }),
  );
  const code = await main(['pll', '--mock', '--items', items]);
  assert.equal(code, 0);
  const back = JSON.parse(await fs.readFile(items, 'utf-8'));
  assert.equal(typeof back.items[0].pll_grammatical, 'number');
  assert.equal(typeof back.items[0].pll_ungrammatical, 'number');
  await fs.rm(dir, { recursive: true });
});

test('parse shells out to an external parser and validates output', async () => {
  const dir = mkdtempSync(join(tmpdir(), 'cli-'));
  const textPath = join(dir, 'raw.txt');
  const outPath = join(dir, 'parsed.conllu');
  writeFileSync(textPath, 'The cats sleep .\n');
  // fake external parser: emits a fixed well-formed CoNLL-U block
  const fake = join(dir, 'fake_parser.cjs');
  writeFileSync(
    fake,
    `const lines = ['# sent_id = p1','1\\tThe\\t_\\t_\\t_\\t_\\t2\\tdet\\t_\\t_','2\\tcats\\t_\\t_\\t_\\t_\\t3\\tnsubj\\t_\\t_','3\\tsleep\\t_\\t_\\t_\\t_\\t0\\troot\\t_\\t_',''];
process.stdout.write(lines.join('\\n'));`,
  );
  const code = await main(['parse', '--text', textPath, '--out', outPath, '--cmd', `node ${fake}`]);
  assert.equal(code, 0);
  const sentences = parseConllu(await fs.readFile(outPath, 'utf-8'));
  assert.equal(sentences.length, 1);
  assert.deepEqual(sentences[0].forms, ['The', 'cats', 'sleep']);
  await fs.rm(dir, { recursive: true });
});

test('empty raw text gives empty output', async () => {
  const dir = mkdtempSync(join(tmpdir(), 'cli-'));
  const textPath = join(dir, 'raw.txt');
  const outPath = join(dir, 'parsed.conllu');
  writeFileSync(textPath, '  \n');
  const code = await main(['parse', '--text', textPath, '--out', outPath, '--cmd', 'node -e ""']);
  assert.equal(code, 0);
  assert.equal(parseConllu(await fs.readFile(outPath, 'utf-8')).length, 0);
  await fs.rm(dir, { recursive: true });
});

test('missing required flag exits 1', async () => {
  assert.equal(await main(['extract', '--mock']), 1);
});

test('unknown command exits 1', async () => {
  assert.equal(await main(['frobnicate']), 1);
});

test('missing transformers backend is a runtime error with guidance', async () => {
  const dir = mkdtempSync(join(tmpdir(), 'cli-'));
  const conllu = join(dir, 'in.conllu');
  writeFileSync(conllu, CONLLU);
  // no --mock and the optional dependency is absent in CI environments;
  // accept either a clean load (2 only when model fetch fails) or the
  // guidance error, but never a crash
  const code = await main(['extract', '--model', 'nonexistent/model', '--conllu', conllu, '--out', join(dir, 'o.bin')]);
  assert.equal(code, 2);
  await fs.rm(dir, { recursive: true });
});
