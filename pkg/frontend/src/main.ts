import { AnnotationApi } from "./api.js";
import { AnnotatorApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new AnnotatorApp(root, new AnnotationApi(), window.localStorage);
void app.boot();
