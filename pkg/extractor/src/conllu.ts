/** Minimal CoNLL-U reader: enough to align tokens and validate output. */

export interface ConlluSentence {
  id: string;
  forms: string[];
  heads: number[];
  rels: string[];
}

export function parseConllu(text: string): ConlluSentence[] {
  const sentences: ConlluSentence[] = [];
  let forms: string[] = [];
  let heads: number[] = [];
  let rels: string[] = [];
  let id: string | null = null;
  let count = 0;

  const flush = () => {
    if (forms.length === 0) {
      id = null;
      return;
    }
    count += 1;
    sentences.push({ id: id ?? `sent-${count}`, forms, heads, rels });
    forms = [];
    heads = [];
    rels = [];
    id = null;
  };

  for (const raw of text.split('\n')) {
    const line = raw.trimEnd();
    if (line === '') {
      flush();
      continue;
    }
    if (line.startsWith('#')) {
      const [key, ...rest] = line.slice(1).split('=');
      if (key.trim() === 'sent_id') id = rest.join('=').trim();
      continue;
    }
    const fields = line.split('\t');
    if (fields.length !== 10) {
      throw new Error(`expected 10 tab-separated fields, got ${fields.length}: ${line}`);
    }
    if (fields[0].includes('-') || fields[0].includes('.')) continue; // MWT / empty node
    forms.push(fields[1]);
    heads.push(Number(fields[6]));
    rels.push(fields[7]);
  }
  flush();
  return sentences;
}

export function toConllu(sent: ConlluSentence): string {
  const lines = [`# sent_id = ${sent.id}`];
  sent.forms.forEach((form, i) => {
    lines.push(
      [String(i + 1), form, '_', '_', '_', '_', String(sent.heads[i] ?? 0), sent.rels[i] ?? '_', '_', '_'].join('\t'),
    );
  });
  return lines.join('\n') + '\n';
}
