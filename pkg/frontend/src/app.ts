/** Review-queue single-page app: render flagged scans, collect decisions.
 *
 * The server stays the source of truth: every selectable label comes
 * from /api/labels, submissions go through the decision endpoint, and a
 * 409 (someone else decided first) swaps the card for the final record.
 */

import { ApiClient, ApiError } from './api.js';
import type { LabelSets, ReviewItemView, ScanRecordView } from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function describeSuggestion(item: ReviewItemView): string {
  const parts: string[] = [];
  if (item.instrument?.label) {
    const pct = item.instrument.confidence != null
      ? ` (${(item.instrument.confidence * 100).toFixed(0)}%)`
      : '';
    parts.push(`instrument: ${item.instrument.label}${pct}`);
  }
  if (item.defect?.label) {
    const pct = item.defect.confidence != null
      ? ` (${(item.defect.confidence * 100).toFixed(0)}%)`
      : '';
    parts.push(`defect: ${item.defect.label}${pct}`);
  }
  return parts.length ? `pipeline suggests ${parts.join(', ')}` : 'no pipeline suggestion';
}

const PLACEHOLDER = '-- choose --';

export class ReviewApp {
  private items: ReviewItemView[] = [];
  private labels: LabelSets = { instruments: [], defects: [] };
  private banner!: HTMLElement;
  private status!: HTMLElement;
  private list!: HTMLElement;
  private reviewerInput!: HTMLInputElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly pollMs: number = 5000,
  ) {}

  async start(): Promise<void> {
    this.root.replaceChildren();
    this.banner = el('div', { class: 'banner', role: 'alert', hidden: '' });
    this.status = el('div', { class: 'status', role: 'status' });
    const header = el('header');
    header.append(el('h1', {}, 'Manual review queue'));
    const reviewerLabel = el('label', {}, 'Reviewer ID ');
    this.reviewerInput = el('input', {
      type: 'text',
      name: 'reviewer',
      placeholder: 'your id',
      'data-testid': 'reviewer-input',
    });
    reviewerLabel.append(this.reviewerInput);
    const refreshButton = el('button', { 'data-testid': 'refresh' }, 'Refresh');
    refreshButton.addEventListener('click', () => void this.refresh());
    header.append(reviewerLabel, refreshButton);
    this.list = el('div', { class: 'queue', 'data-testid': 'queue' });
    this.root.append(this.banner, header, this.status, this.list);

    try {
      this.labels = await this.api.labels();
      this.hideBanner();
    } catch (error) {
      this.showBanner(`cannot load label sets: ${String(error)}`);
    }
    await this.refresh();
    if (this.pollMs > 0) {
      this.timer = setInterval(() => void this.refresh(), this.pollMs);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async refresh(): Promise<void> {
    try {
      this.items = await this.api.queue();
      this.hideBanner();
    } catch (error) {
      this.showBanner(`service unreachable: ${String(error)}`);
      return;
    }
    this.renderQueue();
  }

  private showBanner(message: string): void {
    this.banner.textContent = message;
    this.banner.removeAttribute('hidden');
  }

  private hideBanner(): void {
    this.banner.setAttribute('hidden', '');
    this.banner.textContent = '';
  }

  private setStatus(message: string): void {
    this.status.textContent = message;
  }

  private renderQueue(): void {
    this.list.replaceChildren();
    if (this.items.length === 0) {
      this.list.append(
        el('p', { class: 'empty', 'data-testid': 'empty' }, 'No items awaiting review.'),
      );
      return;
    }
    for (const item of this.items) {
      this.list.append(this.renderItem(item));
    }
  }

  private labelSelect(
    name: string,
    options: string[],
    suggested: string | null,
  ): HTMLSelectElement {
    const select = el('select', { name, 'data-testid': name });
    if (!suggested) {
      select.append(el('option', { value: '' }, PLACEHOLDER));
    }
    for (const option of options) {
      const node = el('option', { value: option }, option);
      if (option === suggested) {
        node.setAttribute('selected', '');
      }
      select.append(node);
    }
    if (suggested) {
      select.value = suggested;
    }
    return select;
  }

  private renderItem(item: ReviewItemView): HTMLElement {
    const card = el('article', { class: 'card', 'data-scan-id': item.scan_id });
    const thumb = el('img', {
      src: item.image_url,
      alt: `scan ${item.scan_id}`,
      width: '160',
      height: '160',
    });
    const title = el('h2', {}, item.scan_id);
    const submitted = el(
      'time',
      {},
      new Date(item.submitted_at * 1000).toISOString(),
    );
    const suggestion = el('p', { class: 'suggestion' }, describeSuggestion(item));

    const instrumentSelect = this.labelSelect(
      'instrument',
      this.labels.instruments,
      item.instrument?.label ?? null,
    );
    const defectSelect = this.labelSelect(
      'defect',
      this.labels.defects,
      item.defect?.label ?? null,
    );
    const note = el('p', { class: 'note', 'data-testid': 'note' });
    const submit = el('button', { 'data-testid': 'submit' }, 'Submit decision');
    submit.addEventListener('click', () => {
      void this.submitDecision(item, card, instrumentSelect, defectSelect, note, submit);
    });

    const form = el('div', { class: 'decision' });
    const instrumentLabel = el('label', {}, 'Instrument ');
    instrumentLabel.append(instrumentSelect);
    const defectLabel = el('label', {}, 'Defect ');
    defectLabel.append(defectSelect);
    form.append(instrumentLabel, defectLabel, submit);
    card.append(thumb, title, submitted, suggestion, form, note);
    return card;
  }

  private async submitDecision(
    item: ReviewItemView,
    card: HTMLElement,
    instrumentSelect: HTMLSelectElement,
    defectSelect: HTMLSelectElement,
    note: HTMLElement,
    submit: HTMLButtonElement,
  ): Promise<void> {
    const reviewer = this.reviewerInput.value.trim();
    if (!reviewer) {
      note.textContent = 'enter a reviewer id before submitting';
      return;
    }
    if (!instrumentSelect.value || !defectSelect.value) {
      note.textContent = 'choose both labels before submitting';
      return;
    }
    submit.setAttribute('disabled', '');
    try {
      await this.api.submitDecision(
        item.scan_id,
        reviewer,
        instrumentSelect.value,
        defectSelect.value,
      );
      this.items = this.items.filter((other) => other.scan_id !== item.scan_id);
      card.remove();
      this.setStatus(`decision recorded for ${item.scan_id}`);
      if (this.items.length === 0) {
        this.renderQueue();
      }
    } catch (error) {
      submit.removeAttribute('disabled');
      if (error instanceof ApiError && error.status === 409) {
        await this.showFinalRecord(item, card, note);
      } else {
        note.textContent = `submission failed, try again: ${String(error)}`;
      }
    }
  }

  private async showFinalRecord(
    item: ReviewItemView,
    card: HTMLElement,
    note: HTMLElement,
  ): Promise<void> {
    let summary = 'already reviewed by someone else';
    try {
      const record: ScanRecordView = await this.api.scan(item.scan_id);
      if (record.decision) {
        summary =
          `already reviewed by ${record.decision.reviewer_id}: ` +
          `${record.decision.decided_instrument} / ${record.decision.decided_defect}`;
      }
    } catch {
      // keep the generic message when the record fetch fails
    }
    note.textContent = summary;
    card.classList.add('conflict');
    for (const control of card.querySelectorAll('select, button')) {
      control.setAttribute('disabled', '');
    }
    this.items = this.items.filter((other) => other.scan_id !== item.scan_id);
  }
}
