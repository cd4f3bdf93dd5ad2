import { CurationApi } from "./api.js";
import { TreeViewApp } from "./app.js";

const container = document.getElementById("app");
if (!container) {
  throw new Error("missing #app container");
}
const app = new TreeViewApp(container, new CurationApi(""));
void app.load();
