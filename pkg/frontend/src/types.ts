/** Shapes mirrored field-for-field from the service's JSON API. */

export interface DispositionView {
  kind: string;
  label: string | null;
  confidence: number | null;
}

export interface ReviewItemView {
  scan_id: string;
  image_url: string;
  submitted_at: number;
  instrument: DispositionView | null;
  defect: DispositionView | null;
}

export interface LabelSets {
  instruments: string[];
  defects: string[];
}

export interface DecisionView {
  scan_id: string;
  reviewer_id: string;
  decided_instrument: string;
  decided_defect: string;
  timestamp: number;
}

export interface ScanRecordView {
  scan_id: string;
  status: string;
  submitted_at: number;
  decision: DecisionView | null;
  post_review_defect: DispositionView | null;
}
