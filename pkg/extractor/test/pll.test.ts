import assert from 'node:assert/strict';
import { test } from 'node:test';

import { mockBackend } from '../src/mock.js';
import { scoreItems, sentencePLL } from '../src/pll.js';
import { buildAlignedSequence } from '../src/align.js';

const WORDS = 'The senators behind the architect avoid spicy dishes .'.split(' ');

test('duplicate sentences score identically (deterministic eval)', async () => {
  const backend = mockBackend();
  const a = await sentencePLL(backend, WORDS);
  const b = await sentencePLL(backend, WORDS);
  assert.equal(a, b);
});

test('PLL is a sum over positions: shuffled position order matches', async () => {
  const backend = mockBackend();
  const pieces = await Promise.all(WORDS.map((w) => backend.tokenizeWord(w)));
  const { ids, spans } = buildAlignedSequence(pieces, backend.clsId, backend.sepId);
  const positions = spans.flatMap((s) =>
    Array.from({ length: s.end - s.start }, (_, k) => s.start + k),
  );
  const shuffled = [...positions].sort(() => 0.5 - Math.abs(Math.sin(positions.length)));
  let total = 0;
  for (const p of shuffled) {
    const masked = ids.slice();
    masked[p] = backend.maskId;
    total += await backend.logProbAt(masked, p, ids[p]);
  }
  const viaApi = await sentencePLL(backend, WORDS);
  assert.ok(Math.abs(total - viaApi) < 1e-9);
});

test('PLL sums only real token positions, not cls/sep', async () => {
  const backend = mockBackend();
  const single = await sentencePLL(backend, ['hi']);
  const pieces = await backend.tokenizeWord('hi');
  assert.equal(pieces.length, 1);
  const { ids } = buildAlignedSequence([pieces], backend.clsId, backend.sepId);
  const masked = ids.slice();
  masked[1] = backend.maskId;
  assert.equal(single, await backend.logProbAt(masked, 1, ids[1]));
});

test('multi-subword words: per-subword masking differs from whole-word', async () => {
  const backend = mockBackend();
  const words = ['extraordinary', 'negotiations']; // > 4 chars => several pieces
  const perSubword = await sentencePLL(backend, words);
  const wholeWord = await sentencePLL(backend, words, { wholeWord: true });
  assert.notEqual(perSubword, wholeWord);
});

test('pair members tokenize identically except at the verb', async () => {
  const backend = mockBackend();
  const gram = 'The senators behind the architect avoid spicy dishes .'.split(' ');
  const ungram = 'The senators behind the architect avoids spicy dishes .'.split(' ');
  const gp = await Promise.all(gram.map((w) => backend.tokenizeWord(w)));
  const up = await Promise.all(ungram.map((w) => backend.tokenizeWord(w)));
  for (let i = 0; i < gram.length; i++) {
    if (i === 5) continue;
    assert.deepEqual(gp[i], up[i]);
  }
  assert.notDeepEqual(gp[5], up[5]);
});

test('scoreItems fills both fields with one policy and keeps extras', async () => {
  const backend = mockBackend();
  const manifest = {
    schema_version: 1,
    extra_field: 'kept',
    items: [
      {
        id: 'item-0001',
        grammatical: 'The cats sleep .',
        ungrammatical: 'The cats sleeps .',
        pll_grammatical: null,
        pll_ungrammatical: null,
        subject_number: 'pl',
      },
    ],
  };
  const scored = await scoreItems(backend, manifest);
  assert.equal(typeof scored.items[0].pll_grammatical, 'number');
  assert.equal(typeof scored.items[0].pll_ungrammatical, 'number');
  assert.equal(scored.extra_field, 'kept');
  assert.equal(scored.items[0].subject_number, 'pl');
});
