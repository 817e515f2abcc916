export { DST_MAGIC, DstFormatError, Tensor, decodeTensor, encodeTensor, readTensor, writeTensor } from './dst';
export { GrayImage, LabelMap, readGray, readLabels } from './png';
export { ManifestEntry, loadManifest } from './manifest';
export { DEFAULT_MODEL, Extractor, GridFeatures, MODELS, ModelSpec, Plane, areaResample } from './model';
export { DenseResult, extractDense } from './dense';
export { CropsResult, extractCrops, resolveRunDir } from './crops';
