// Annotation session state: the stroke list, undo/redo history, and the
// most recent segmentation response.
//
// History entries are whole stroke-list snapshots. Strokes are treated as
// immutable once created, so snapshots are cheap shared references and
// undo restores exactly the list the user saw before the edit.

import type { CanvasStroke, SegmentResponse } from './types';

export class SessionState {
  overlayOpacity = 0.5;

  private strokeList: readonly CanvasStroke[] = [];
  private undoStack: Array<readonly CanvasStroke[]> = [];
  private redoStack: Array<readonly CanvasStroke[]> = [];
  private response: SegmentResponse | null = null;

  get strokes(): readonly CanvasStroke[] {
    return this.strokeList;
  }

  get lastResponse(): SegmentResponse | null {
    return this.response;
  }

  addStroke(stroke: CanvasStroke): void {
    this.undoStack.push(this.strokeList);
    this.redoStack = [];
    this.strokeList = [...this.strokeList, stroke];
  }

  // Replace the whole stroke list (import path). One undoable edit.
  replaceStrokes(strokes: readonly CanvasStroke[]): void {
    this.undoStack.push(this.strokeList);
    this.redoStack = [];
    this.strokeList = [...strokes];
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const snapshot = this.undoStack.pop();
    if (snapshot === undefined) {
      return false;
    }
    this.redoStack.push(this.strokeList);
    this.strokeList = snapshot;
    return true;
  }

  redo(): boolean {
    const snapshot = this.redoStack.pop();
    if (snapshot === undefined) {
      return false;
    }
    this.undoStack.push(this.strokeList);
    this.strokeList = snapshot;
    return true;
  }

  setResponse(response: SegmentResponse): void {
    this.response = response;
  }

  setOverlayOpacity(value: number): void {
    this.overlayOpacity = Math.min(Math.max(value, 0), 1);
  }

  // Export requires a segmentation response; the button stays disabled
  // until one arrives.
  canExport(): boolean {
    return this.response !== null;
  }
}
