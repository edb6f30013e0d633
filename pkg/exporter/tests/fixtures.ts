/** Test fixtures re-exported from the shipped sample-asset builders. */

export {
  CLASSES,
  INPUT_HW,
  buildToyCheckpoint,
  toyRecipe,
  writeBlackImage,
  writeProbeImages,
} from '../src/toy.js';
