import type { TreeJson } from "../src/types.js";

export function fixtureTree(): TreeJson {
  return {
    version: 0,
    root_id: "root",
    nodes: [
      { id: "root", label: "chest", layer: 1 },
      { id: "heart", label: "heart", layer: 2, parent_id: "root" },
      {
        id: "heart.cardiomegaly",
        label: "cardiomegaly",
        layer: 3,
        parent_id: "heart",
        knowledge_text: "Check the cardiothoracic ratio.",
        sentences: [{ report_id: "r1", index: 0, text: "The heart is big." }],
      },
      {
        id: "heart.enlarged",
        label: "enlarged silhouette",
        layer: 3,
        parent_id: "heart",
        knowledge_text: "Check the silhouette width.",
        sentences: [
          { report_id: "r2", index: 0, text: "Wide silhouette." },
          { report_id: "r3", index: 1, text: "Borderline wide." },
        ],
      },
      { id: "lungs", label: "lungs", layer: 2, parent_id: "root" },
      {
        id: "lungs.edema",
        label: "edema",
        layer: 3,
        parent_id: "lungs",
        knowledge_text: "Check for interstitial fluid.",
        sentences: [],
      },
      { id: "devices", label: "devices", layer: 2, parent_id: "root" },
    ],
    edit_log: [],
    unclassified: [],
  };
}
