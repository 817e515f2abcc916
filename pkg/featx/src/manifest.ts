/**
 * Dataset manifests: tab-separated `image<TAB>[gt_mask]<TAB>[features]`
 * records, optional fields blank, `#` lines ignored.  Relative paths
 * resolve against the manifest's directory.  Image ids are derived the
 * same way the core pipeline derives them, so emitted feature files
 * line up with the run directory's artifact names.
 */

import { readFileSync } from 'fs';
import * as path from 'path';

export interface ManifestEntry {
  imageId: string;
  imagePath: string;
  gtMaskPath: string | null;
  featurePath: string | null;
}

function sanitizeId(text: string): string {
  return Array.from(text, (ch) => (/[A-Za-z0-9._-]/.test(ch) ? ch : '_')).join('');
}

function stemOf(p: string): string {
  const base = path.basename(p);
  const dot = base.lastIndexOf('.');
  return dot > 0 ? base.slice(0, dot) : base;
}

export function loadManifest(manifestPath: string): ManifestEntry[] {
  let text: string;
  try {
    text = readFileSync(manifestPath, 'utf8');
  } catch (err) {
    throw new Error(`cannot read manifest ${manifestPath}: ${(err as Error).message}`);
  }
  const root = path.dirname(manifestPath);
  const rows: { lineno: number; image: string; gt: string | null; feat: string | null }[] = [];
  text.split('\n').forEach((raw, idx) => {
    const line = raw.replace(/\r$/, '');
    if (!line.trim() || line.trimStart().startsWith('#')) return;
    const fields = line.split('\t');
    if (fields.length > 3) {
      throw new Error(`${manifestPath}:${idx + 1}: expected at most 3 fields`);
    }
    const image = fields[0].trim();
    if (!image) {
      throw new Error(`${manifestPath}:${idx + 1}: missing image path`);
    }
    const gt = (fields[1] ?? '').trim();
    const feat = (fields[2] ?? '').trim();
    rows.push({ lineno: idx + 1, image, gt: gt || null, feat: feat || null });
  });

  const seen = new Map<string, number>();
  for (const row of rows) {
    const first = seen.get(row.image);
    if (first !== undefined) {
      throw new Error(
        `${manifestPath}:${row.lineno}: duplicate image path "${row.image}" (first seen on line ${first})`,
      );
    }
    seen.set(row.image, row.lineno);
  }

  const stems = rows.map((r) => stemOf(r.image));
  const useStems = new Set(stems).size === stems.length;
  const resolve = (p: string) => (path.isAbsolute(p) ? p : path.join(root, p));
  return rows.map((row, i) => {
    const imageId = useStems
      ? sanitizeId(stems[i])
      : sanitizeId(
          row.image
            .replace(/\.[^./\\]+$/, '')
            .split(/[/\\]/)
            .filter(Boolean)
            .join('_'),
        );
    return {
      imageId,
      imagePath: resolve(row.image),
      gtMaskPath: row.gt === null ? null : resolve(row.gt),
      featurePath: row.feat === null ? null : resolve(row.feat),
    };
  });
}
