// Inject editing: client-side validation mirrors the service rules so no
// UI action can produce a request the service rejects.

export interface InjectPatchFields {
  title?: string;
  description?: string;
  difficulty?: number;
  timing_offset?: number;
}

export function validateInjectPatch(patch: InjectPatchFields): string | null {
  if (patch.difficulty !== undefined) {
    if (!Number.isInteger(patch.difficulty) || patch.difficulty < 1 || patch.difficulty > 5) {
      return 'difficulty must be an integer from 1 to 5';
    }
  }
  if (patch.timing_offset !== undefined) {
    if (!Number.isInteger(patch.timing_offset) || patch.timing_offset < 0) {
      return 'timing offset must be a non-negative number of minutes';
    }
  }
  if (patch.title !== undefined && !patch.title.trim()) {
    return 'title must not be empty';
  }
  return null;
}
